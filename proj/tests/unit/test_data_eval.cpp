#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "abn/data/dataset.hpp"
#include "abn/data/pgm.hpp"
#include "abn/data/synthetic.hpp"
#include "abn/eval/metrics.hpp"
#include "support/temp_dir.hpp"

using namespace abn;
using data::BinaryMask;

namespace {

BinaryMask row_mask(std::vector<std::uint8_t> bits) {
  const auto n = bits.size();
  return BinaryMask(1, n, std::move(bits));
}

BinaryMask random_mask(std::size_t h, std::size_t w, std::mt19937_64& rng, double p = 0.4) {
  std::bernoulli_distribution b(p);
  BinaryMask m(h, w);
  for (auto& v : m.bits) v = b(rng);
  return m;
}

// Straight 8-neighbour dilation.
BinaryMask dilate_oracle(const BinaryMask& m) {
  BinaryMask out(m.height, m.width);
  for (long r = 0; r < static_cast<long>(m.height); ++r)
    for (long c = 0; c < static_cast<long>(m.width); ++c) {
      bool on = false;
      for (long dr = -1; dr <= 1; ++dr)
        for (long dc = -1; dc <= 1; ++dc) {
          const long y = r + dr, x = c + dc;
          if (y >= 0 && x >= 0 && y < static_cast<long>(m.height) &&
              x < static_cast<long>(m.width) && m.at(y, x))
            on = true;
        }
      out.at(r, c) = on;
    }
  return out;
}

}  // namespace

TEST_SUITE("pgm") {
  TEST_CASE("binary round trip") {
    data::GrayImage8 img{3, 4, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 254, 255}};
    auto back = data::decode_pgm(data::encode_pgm(img), "mem");
    CHECK(back.height == 3);
    CHECK(back.width == 4);
    CHECK(back.pixels == img.pixels);
  }

  TEST_CASE("ascii with comments") {
    auto img = data::decode_pgm("P2\n# note\n2 2\n255\n0 10\n200 255\n", "mem");
    CHECK(img.pixels == std::vector<std::uint8_t>{0, 10, 200, 255});
  }

  TEST_CASE("malformed inputs are corrupt errors") {
    CHECK_THROWS_AS(data::decode_pgm("P6\n1 1\n255\n\0\0\0", "mem"), CorruptError);
    CHECK_THROWS_AS(data::decode_pgm("P5\n2 2\n255\n\x01", "mem"), CorruptError);
    CHECK_THROWS_AS(data::decode_pgm("P5\n2 2\n65535\n", "mem"), CorruptError);
    CHECK_THROWS_AS(data::decode_pgm("P5\nx 2\n255\n", "mem"), CorruptError);
    CHECK_THROWS_AS(data::read_pgm("/nonexistent/a.pgm"), IoError);
  }
}

TEST_SUITE("dataset") {
  TEST_CASE("sample validation") {
    data::LabeledSample s{"a", nn::Tensor<float>({4, 4}, 0.5f), 0, {}, data::Split::kTrain};
    CHECK_NOTHROW(data::validate_sample(s));
    auto bad = s;
    bad.image[3] = 1.5f;
    CHECK_THROWS_AS(data::validate_sample(bad), ValueError);
    bad = s;
    bad.label = 2;
    CHECK_THROWS_AS(data::validate_sample(bad), ValueError);
    bad = s;
    bad.expert_mask = BinaryMask(4, 4, 1);
    CHECK_THROWS_AS(data::validate_sample(bad), ValueError);  // normal with lesion
    bad.label = 1;
    CHECK_NOTHROW(data::validate_sample(bad));
    bad.expert_mask = BinaryMask(3, 4, 1);
    CHECK_THROWS_AS(data::validate_sample(bad), ShapeError);
    bad = s;
    bad.image = nn::Tensor<float>({1, 4, 4});
    CHECK_THROWS_AS(data::validate_sample(bad), ShapeError);
  }

  TEST_CASE("split names") {
    for (auto s : {data::Split::kTrain, data::Split::kTest, data::Split::kQuiz})
      CHECK(data::parse_split(data::split_name(s)) == s);
    CHECK_THROWS_AS(data::parse_split("dev"), ValueError);
  }

  TEST_CASE("write then load gives an equal dataset") {
    test::TempDir dir;
    data::CorpusSizes sizes{3, 2, 2, 2, 1, 1};
    auto ds = data::generate_corpus(5, sizes, 32);
    auto manifest = data::write_dataset(ds, dir.path());
    auto back = data::load_dataset(manifest);
    CHECK(back == ds);
    CHECK(back.find("train-00001") != nullptr);
    CHECK(back.find("nope") == nullptr);
  }

  TEST_CASE("manifest errors") {
    test::TempDir dir;
    auto ds = data::generate_corpus(5, {2, 2, 0, 0, 0, 0}, 32);
    auto manifest = data::write_dataset(ds, dir.path());
    nlohmann::json doc;
    {
      std::ifstream in(manifest);
      doc = nlohmann::json::parse(in);
    }
    auto rewrite = [&](const nlohmann::json& j) {
      std::ofstream out(manifest, std::ios::trunc);
      out << j.dump();
    };

    SUBCASE("duplicate ids are all named") {
      auto j = doc;
      j["samples"].push_back(j["samples"][0]);
      j["samples"].push_back(j["samples"][1]);
      rewrite(j);
      try {
        data::load_dataset(manifest);
        FAIL("expected ValueError");
      } catch (const ValueError& e) {
        const std::string msg = e.what();
        CHECK(msg.find(ds.samples[0].id) != std::string::npos);
        CHECK(msg.find(ds.samples[1].id) != std::string::npos);
      }
    }
    SUBCASE("missing image file") {
      std::filesystem::remove(dir / doc["samples"][0]["image"].get<std::string>());
      CHECK_THROWS_AS(data::load_dataset(manifest), IoError);
    }
    SUBCASE("non-binary mask") {
      std::string mask_rel;
      for (const auto& e : doc["samples"])
        if (e.contains("mask")) mask_rel = e["mask"];
      REQUIRE_FALSE(mask_rel.empty());
      auto m = data::read_pgm(dir / mask_rel);
      m.pixels[0] = 128;
      data::write_pgm(dir / mask_rel, m);
      CHECK_THROWS_AS(data::load_dataset(manifest), ValueError);
    }
    SUBCASE("schema version") {
      auto j = doc;
      j["schema_version"] = 2;
      rewrite(j);
      CHECK_THROWS_AS(data::load_dataset(manifest), VersionError);
    }
    SUBCASE("garbage") {
      std::ofstream(manifest, std::ios::trunc) << "{not json";
      CHECK_THROWS_AS(data::load_dataset(manifest), CorruptError);
    }
  }
}

TEST_SUITE("synthetic corpus") {
  TEST_CASE("default composition and disjoint splits") {
    auto ds = data::generate_corpus(42);
    std::map<data::Split, std::pair<int, int>> counts;
    std::set<std::string> ids;
    for (const auto& s : ds.samples) {
      (s.label ? counts[s.split].second : counts[s.split].first)++;
      CHECK(ids.insert(s.id).second);
    }
    CHECK(counts[data::Split::kTrain] == std::pair{124, 81});
    CHECK(counts[data::Split::kTest] == std::pair{30, 30});
    CHECK(counts[data::Split::kQuiz] == std::pair{30, 30});
    CHECK(std::is_sorted(ds.samples.begin(), ds.samples.end(),
                         [](const auto& a, const auto& b) { return a.id < b.id; }));
  }

  TEST_CASE("label iff lesion iff non-empty mask; values valid") {
    auto ds = data::generate_corpus(7, {20, 20, 0, 0, 0, 0});
    for (const auto& s : ds.samples) {
      CHECK_NOTHROW(data::validate_sample(s));
      CHECK((s.label == 1) == s.has_expert_mask());
      for (float v : s.image.data()) {
        const float q = v * 255.0f;
        CHECK(std::abs(q - std::round(q)) < 1e-3f);
      }
    }
  }

  TEST_CASE("same seed same corpus, different seed different corpus") {
    data::CorpusSizes sizes{4, 4, 2, 2, 2, 2};
    CHECK(data::generate_corpus(3, sizes) == data::generate_corpus(3, sizes));
    CHECK_FALSE(data::generate_corpus(3, sizes) == data::generate_corpus(4, sizes));
  }

  TEST_CASE("lesions lie in the disk and the mask is the dilated support") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
      auto img = data::generate_one(seed, true, 64, "x");
      REQUIRE(img.lesion_support.any());
      for (std::size_t r = 0; r < 64; ++r)
        for (std::size_t c = 0; c < 64; ++c)
          if (img.lesion_support.at(r, c)) CHECK(img.disk.contains(double(r), double(c)));
      CHECK(*img.sample.expert_mask == dilate_oracle(img.lesion_support));
      auto normal = data::generate_one(seed, false, 64, "y");
      CHECK_FALSE(normal.lesion_support.any());
      CHECK_FALSE(normal.sample.has_expert_mask());
    }
  }

  TEST_CASE("image size must hold the disk") {
    CHECK_THROWS_AS(data::generate_synthetic(1, 1, 1, {16, "s", data::Split::kTrain}), ValueError);
  }
}

TEST_SUITE("area average") {
  TEST_CASE("coverage fractions") {
    BinaryMask m(4, 4);
    m.at(0, 0) = m.at(0, 1) = m.at(1, 0) = 1;
    m.at(3, 3) = 1;
    auto a = data::area_average(m, 2, 2);
    CHECK(a.at(0, 0) == doctest::Approx(0.75));
    CHECK(a.at(0, 1) == 0.0f);
    CHECK(a.at(1, 1) == doctest::Approx(0.25));
    CHECK_THROWS_AS(data::area_average(m, 3, 3), ShapeError);
  }
}

TEST_SUITE("metrics") {
  TEST_CASE("class_iou worked cases") {
    // A covers 4, B covers 4, 2 shared: 2 / 6
    auto a = row_mask({1, 1, 1, 1, 0, 0, 0, 0});
    auto b = row_mask({0, 0, 1, 1, 1, 1, 0, 0});
    CHECK(eval::class_iou(a, b) == doctest::Approx(2.0 / 6.0));
    CHECK(eval::class_iou(a, a) == 1.0);
    CHECK(eval::class_iou(a, row_mask({0, 0, 0, 0, 1, 1, 1, 1})) == 0.0);
    CHECK(eval::class_iou(BinaryMask(2, 2), BinaryMask(2, 2)) == 1.0);
    CHECK_THROWS_AS(eval::class_iou(BinaryMask(2, 2), BinaryMask(2, 3)), ShapeError);
  }

  TEST_CASE("class_iou properties on random masks") {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 200; ++t) {
      auto a = random_mask(6, 7, rng), b = random_mask(6, 7, rng);
      const double ab = eval::class_iou(a, b);
      CHECK(ab == eval::class_iou(b, a));
      CHECK(ab >= 0.0);
      CHECK(ab <= 1.0);
      if (a.any()) CHECK(eval::class_iou(a, a) == 1.0);
      // oracle
      std::size_t i = 0, u = 0;
      for (std::size_t k = 0; k < a.bits.size(); ++k) {
        i += a.bits[k] && b.bits[k];
        u += a.bits[k] || b.bits[k];
      }
      CHECK(ab == (u ? double(i) / double(u) : 1.0));
    }
  }

  TEST_CASE("binarize: ties go to 1, idempotent on binary maps") {
    nn::Tensor<float> m({1, 4}, std::vector<float>{0.49999f, 0.5f, 0.50001f, 1.0f});
    CHECK(eval::binarize_map(m).bits == std::vector<std::uint8_t>{0, 1, 1, 1});
    std::mt19937_64 rng(3);
    auto bin = random_mask(5, 5, rng);
    nn::Tensor<float> as_float({5, 5});
    for (std::size_t i = 0; i < 25; ++i) as_float[i] = bin.bits[i];
    CHECK(eval::binarize_map(as_float) == bin);
    CHECK_THROWS_AS(eval::binarize_map(m, 0.0), ValueError);
    CHECK_THROWS_AS(eval::binarize_map(m, 1.0), ValueError);
    CHECK_THROWS_AS(eval::binarize_map(nn::Tensor<float>({4})), ShapeError);
  }

  TEST_CASE("nearest upsample replicates blocks") {
    BinaryMask m(2, 2, std::vector<std::uint8_t>{1, 0, 0, 1});
    auto up = eval::upsample_nearest(m, 4, 4);
    CHECK(up.bits == std::vector<std::uint8_t>{1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1});
    auto t = eval::upsample_nearest(nn::Tensor<float>({1, 2}, std::vector<float>{0.2f, 0.8f}), 2, 4);
    CHECK(t.vec() == std::vector<float>{0.2f, 0.2f, 0.8f, 0.8f, 0.2f, 0.2f, 0.8f, 0.8f});
  }

  TEST_CASE("accuracy is permutation invariant and counts exactly") {
    auto samples = data::generate_synthetic(9, 10, 10, {32, "p", data::Split::kTest});
    // predictor depends only on the sample, not its position
    eval::Predictor pred = [](const data::LabeledSample& s) {
      return static_cast<std::size_t>(s.image[200] > 0.3f);
    };
    const double base = eval::accuracy(pred, samples);
    std::size_t hits = 0;
    for (const auto& s : samples) hits += pred(s) == static_cast<std::size_t>(s.label);
    CHECK(base == double(hits) / double(samples.size()));
    std::mt19937_64 rng(1);
    for (int t = 0; t < 20; ++t) {
      std::shuffle(samples.begin(), samples.end(), rng);
      CHECK(eval::accuracy(pred, samples) == base);
    }
    CHECK_THROWS_AS(eval::accuracy(pred, {}), ValueError);
  }

  TEST_CASE("per-class accuracy, NaN for an absent class") {
    auto samples = data::generate_synthetic(9, 4, 0, {32, "p", data::Split::kTest});
    eval::Predictor zero = [](const data::LabeledSample&) { return std::size_t{0}; };
    auto pc = eval::per_class_accuracy(zero, samples);
    CHECK(pc[0] == 1.0);
    CHECK(std::isnan(pc[1]));
  }

  TEST_CASE("report json round trip and missing masks") {
    model::AbnModel m;
    auto samples = data::generate_synthetic(2, 3, 3, {64, "r", data::Split::kTest});
    auto r = eval::attention_iou_report(m, samples);
    CHECK(r.n_samples == 6);
    CHECK(r.n_disease == 3);
    CHECK(r.accuracy >= 0.0);
    CHECK(r.accuracy <= 1.0);
    CHECK(r.mean_iou >= 0.0);
    CHECK(r.mean_iou <= 1.0);
    auto back = eval::eval_report_from_json(eval::to_json(r));
    CHECK(back.accuracy == r.accuracy);
    CHECK(back.mean_iou == r.mean_iou);
    CHECK(back.n_disease == r.n_disease);
    CHECK(eval::format_table({r, back}).find("mean_iou") != std::string::npos);

    for (auto& s : samples)
      if (s.label == 1) {
        s.expert_mask.reset();
        s.id = "lost-" + s.id;
      }
    try {
      eval::attention_iou_report(m, samples);
      FAIL("expected ValueError");
    } catch (const ValueError& e) {
      CHECK(std::string(e.what()).find("lost-") != std::string::npos);
    }
  }
}
