#include "abn/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>

namespace abn::data {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x51ed27ULL));
}

struct Rng {
  std::mt19937_64 eng;
  explicit Rng(std::uint64_t s) : eng(s) {}
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(eng);
  }
  int integer(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(eng);
  }
  double normal(double sd) { return std::normal_distribution<double>(0.0, sd)(eng); }
};

BinaryMask dilate(const BinaryMask& m) {
  BinaryMask out(m.height, m.width);
  for (std::size_t r = 0; r < m.height; ++r) {
    for (std::size_t c = 0; c < m.width; ++c) {
      if (!m.at(r, c)) continue;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const long rr = static_cast<long>(r) + dr;
          const long cc = static_cast<long>(c) + dc;
          if (rr < 0 || cc < 0 || rr >= static_cast<long>(m.height) ||
              cc >= static_cast<long>(m.width)) {
            continue;
          }
          out.at(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) = 1;
        }
      }
    }
  }
  return out;
}

}  // namespace

SyntheticImage generate_one(std::uint64_t seed, bool diseased,
                            std::size_t image_size, std::string id) {
  if (image_size < 32) {
    throw ValueError("synthetic image_size must be >= 32 to hold the disk, got " +
                     std::to_string(image_size));
  }
  Rng rng(seed);
  const auto n = image_size;
  const double size = static_cast<double>(n);
  const double mid = size / 2.0 - 0.5;

  DiskGeometry disk{mid + rng.uniform(-2, 2), mid + rng.uniform(-2, 2),
                    size * rng.uniform(0.40, 0.44)};

  std::vector<double> px(n * n, 0.0);

  // Low-frequency background.
  const double base = rng.uniform(0.30, 0.40);
  struct Bump { double y, x, sigma, amp; };
  std::vector<Bump> bumps(4);
  for (auto& b : bumps) {
    b = {disk.center_y + rng.uniform(-disk.radius, disk.radius),
         disk.center_x + rng.uniform(-disk.radius, disk.radius),
         size * rng.uniform(0.15, 0.35), rng.uniform(-0.08, 0.08)};
  }
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double dy = y - disk.center_y, dx = x - disk.center_x;
      const double rr = (dy * dy + dx * dx) / (disk.radius * disk.radius);
      double v = base - 0.10 * rr;
      for (const auto& b : bumps) {
        const double by = y - b.y, bx = x - b.x;
        v += b.amp * std::exp(-(by * by + bx * bx) / (2 * b.sigma * b.sigma));
      }
      px[y * n + x] = v;
    }
  }

  // Vessels: quadratic Bezier curves radiating from near the disk centre.
  const int n_vessels = rng.integer(3, 5);
  std::vector<double> dist(n * n);
  for (int k = 0; k < n_vessels; ++k) {
    const double a0 = rng.uniform(0, 2 * std::numbers::pi);
    const double r0 = rng.uniform(0, 0.2) * disk.radius;
    const double p0y = disk.center_y + r0 * std::sin(a0);
    const double p0x = disk.center_x + r0 * std::cos(a0);
    const double a2 = rng.uniform(0, 2 * std::numbers::pi);
    const double p2y = disk.center_y + 0.95 * disk.radius * std::sin(a2);
    const double p2x = disk.center_x + 0.95 * disk.radius * std::cos(a2);
    const double bend = rng.uniform(-0.3, 0.3) * disk.radius;
    const double ly = p2y - p0y, lx = p2x - p0x;
    const double len = std::max(1e-9, std::hypot(ly, lx));
    const double p1y = (p0y + p2y) / 2 + bend * (lx / len);
    const double p1x = (p0x + p2x) / 2 - bend * (ly / len);
    const double width = rng.uniform(0.6, 1.2);
    const double depth = rng.uniform(0.07, 0.12);

    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    for (int s = 0; s <= 200; ++s) {
      const double t = s / 200.0, u = 1 - t;
      const double cy = u * u * p0y + 2 * u * t * p1y + t * t * p2y;
      const double cx = u * u * p0x + 2 * u * t * p1x + t * t * p2x;
      const long iy = std::lround(cy), ix = std::lround(cx);
      for (long yy = iy - 3; yy <= iy + 3; ++yy) {
        for (long xx = ix - 3; xx <= ix + 3; ++xx) {
          if (yy < 0 || xx < 0 || yy >= static_cast<long>(n) ||
              xx >= static_cast<long>(n)) {
            continue;
          }
          const double d = std::hypot(yy - cy, xx - cx);
          auto& slot = dist[static_cast<std::size_t>(yy) * n +
                            static_cast<std::size_t>(xx)];
          slot = std::min(slot, d);
        }
      }
    }
    for (std::size_t i = 0; i < px.size(); ++i) {
      if (std::isfinite(dist[i])) {
        px[i] -= depth * std::exp(-dist[i] * dist[i] / (2 * width * width));
      }
    }
  }

  // Lesions.
  BinaryMask support(n, n);
  if (diseased) {
    const int n_lesions = rng.integer(1, 3);
    for (int k = 0; k < n_lesions; ++k) {
      const double rad = rng.uniform(3.5, 6.0);
      const double amp = rng.uniform(0.30, 0.45);
      const double max_off = disk.radius - rad - 2.5;
      double ly = 0, lx = 0;
      do {
        ly = rng.uniform(-max_off, max_off);
        lx = rng.uniform(-max_off, max_off);
      } while (ly * ly + lx * lx > max_off * max_off);
      ly += disk.center_y;
      lx += disk.center_x;
      for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
          const double d = std::hypot(y - ly, x - lx);
          if (d < rad) {
            const double q = d / rad;
            px[y * n + x] += amp * (1 - q * q);
            support.at(y, x) = 1;
          }
        }
      }
    }
  }

  LabeledSample s;
  s.id = std::move(id);
  s.label = diseased ? 1 : 0;
  std::vector<float> img(n * n);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      double v = 0.0;
      if (disk.contains(static_cast<double>(y), static_cast<double>(x))) {
        v = std::clamp(px[y * n + x] + rng.normal(0.015), 0.0, 1.0);
      }
      img[y * n + x] = static_cast<float>(std::lround(v * 255.0)) / 255.0f;
    }
  }
  s.image = nn::Tensor<float>({n, n}, std::move(img));
  if (diseased) s.expert_mask = dilate(support);
  return {std::move(s), disk, std::move(support)};
}

std::vector<LabeledSample> generate_synthetic(std::uint64_t seed,
                                              std::size_t n_normal,
                                              std::size_t n_diseased,
                                              const SyntheticOptions& opts) {
  if (opts.image_size < 32) {
    throw ValueError("synthetic image_size must be >= 32 to hold the disk, got " +
                     std::to_string(opts.image_size));
  }
  const std::size_t total = n_normal + n_diseased;
  // Class assignment is shuffled so ids carry no label information.
  std::vector<bool> diseased(total, false);
  std::fill(diseased.begin() + static_cast<long>(n_normal), diseased.end(), true);
  std::mt19937_64 shuffler(mix(seed, 0xC1A55ULL));
  std::shuffle(diseased.begin(), diseased.end(), shuffler);

  std::vector<LabeledSample> out;
  out.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    char id[64];
    std::snprintf(id, sizeof id, "%s-%05zu", opts.id_prefix.c_str(), i);
    auto img = generate_one(mix(seed, i + 1), diseased[i], opts.image_size, id);
    img.sample.split = opts.split;
    out.push_back(std::move(img.sample));
  }
  return out;
}

Dataset generate_corpus(std::uint64_t seed, const CorpusSizes& sizes,
                        std::size_t image_size) {
  Dataset ds;
  auto append = [&](std::uint64_t stream, std::size_t nn, std::size_t nd,
                    Split split) {
    SyntheticOptions o{image_size, std::string(split_name(split)), split};
    auto part = generate_synthetic(mix(seed, stream), nn, nd, o);
    for (auto& s : part) ds.samples.push_back(std::move(s));
  };
  append(101, sizes.train_normal, sizes.train_diseased, Split::kTrain);
  append(202, sizes.test_normal, sizes.test_diseased, Split::kTest);
  append(303, sizes.quiz_normal, sizes.quiz_diseased, Split::kQuiz);
  std::sort(ds.samples.begin(), ds.samples.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  return ds;
}

}  // namespace abn::data
