#include "abn/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "abn/data/pgm.hpp"

namespace abn::data {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kTest: return "test";
    case Split::kQuiz: return "quiz";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "test") return Split::kTest;
  if (name == "quiz") return Split::kQuiz;
  throw ValueError("unknown split '" + std::string(name) + "'");
}

void validate_sample(const LabeledSample& s) {
  if (s.image.rank() != 2 || s.image.empty()) {
    throw ShapeError(s.id + ": image must be a non-empty HxW array");
  }
  for (float v : s.image.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw ValueError(s.id + ": image values must lie in [0,1]");
    }
  }
  if (s.label != 0 && s.label != 1) {
    throw ValueError(s.id + ": label must be 0 (normal) or 1 (diseased)");
  }
  if (s.expert_mask) {
    const auto& m = *s.expert_mask;
    if (m.height != s.height() || m.width != s.width()) {
      throw ShapeError(s.id + ": expert mask size differs from image size");
    }
    for (auto b : m.bits) {
      if (b > 1) throw ValueError(s.id + ": expert mask is not binary");
    }
    if (m.any() && s.label != 1) {
      throw ValueError(s.id + ": non-empty expert mask on a normal sample");
    }
  }
}

std::vector<LabeledSample> Dataset::split(Split s) const {
  std::vector<LabeledSample> out;
  for (const auto& x : samples) {
    if (x.split == s) out.push_back(x);
  }
  return out;
}

const LabeledSample* Dataset::find(std::string_view id) const {
  auto it = std::lower_bound(
      samples.begin(), samples.end(), id,
      [](const LabeledSample& a, std::string_view b) { return a.id < b; });
  if (it != samples.end() && it->id == id) return &*it;
  return nullptr;
}

namespace {

std::string join(const std::vector<std::string>& xs) {
  std::string out;
  for (const auto& x : xs) {
    if (!out.empty()) out += ", ";
    out += x;
  }
  return out;
}

}  // namespace

Dataset load_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest: " + manifest_path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw CorruptError("manifest " + manifest_path.string() +
                       " does not parse: " + e.what());
  }
  const int version = doc.value("schema_version", -1);
  if (version != kManifestSchemaVersion) {
    throw VersionError("manifest schema_version " + std::to_string(version) +
                       " unsupported (expected " +
                       std::to_string(kManifestSchemaVersion) + ")");
  }
  const fs::path base = manifest_path.parent_path();

  Dataset ds;
  std::set<std::string> ids;
  std::vector<std::string> duplicates, non_binary;
  for (const auto& entry : doc.at("samples")) {
    LabeledSample s;
    s.id = entry.at("id").get<std::string>();
    if (!ids.insert(s.id).second) {
      duplicates.push_back(s.id);
      continue;
    }
    s.split = parse_split(entry.value("split", "train"));
    s.label = entry.at("label").get<int>();

    const fs::path img_path = base / entry.at("image").get<std::string>();
    if (!fs::exists(img_path)) {
      throw IoError("sample " + s.id + ": image file not found: " +
                    img_path.string());
    }
    const GrayImage8 img = read_pgm(img_path);
    std::vector<float> px(img.pixels.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
      px[i] = static_cast<float>(img.pixels[i]) / 255.0f;
    }
    s.image = nn::Tensor<float>({img.height, img.width}, std::move(px));

    if (entry.contains("mask") && !entry["mask"].is_null()) {
      const fs::path mask_path = base / entry["mask"].get<std::string>();
      if (!fs::exists(mask_path)) {
        throw IoError("sample " + s.id + ": mask file not found: " +
                      mask_path.string());
      }
      const GrayImage8 m = read_pgm(mask_path);
      BinaryMask mask(m.height, m.width);
      bool binary = true;
      for (std::size_t i = 0; i < m.pixels.size(); ++i) {
        if (m.pixels[i] == 255) {
          mask.bits[i] = 1;
        } else if (m.pixels[i] != 0) {
          binary = false;
        }
      }
      if (!binary) {
        non_binary.push_back(s.id);
        continue;
      }
      s.expert_mask = std::move(mask);
    }
    validate_sample(s);
    ds.samples.push_back(std::move(s));
  }
  if (!duplicates.empty()) {
    throw ValueError("duplicate sample ids: " + join(duplicates));
  }
  if (!non_binary.empty()) {
    throw ValueError("non-binary masks (expected 0/255): " + join(non_binary));
  }
  std::sort(ds.samples.begin(), ds.samples.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  return ds;
}

fs::path write_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  json samples = json::array();
  for (const auto& s : dataset.samples) {
    validate_sample(s);
    GrayImage8 img{s.height(), s.width(), {}};
    img.pixels.reserve(s.image.size());
    for (float v : s.image.data()) {
      img.pixels.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
    }
    const std::string img_rel = "images/" + s.id + ".pgm";
    write_pgm(dir / img_rel, img);
    json e = {{"id", s.id},
              {"split", std::string(split_name(s.split))},
              {"label", s.label},
              {"image", img_rel}};
    if (s.expert_mask) {
      GrayImage8 m{s.expert_mask->height, s.expert_mask->width, {}};
      m.pixels.reserve(s.expert_mask->bits.size());
      for (auto b : s.expert_mask->bits) m.pixels.push_back(b ? 255 : 0);
      const std::string mask_rel = "masks/" + s.id + ".pgm";
      write_pgm(dir / mask_rel, m);
      e["mask"] = mask_rel;
    }
    samples.push_back(std::move(e));
  }
  json doc = {{"schema_version", kManifestSchemaVersion}, {"samples", samples}};
  const fs::path manifest = dir / "manifest.json";
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write manifest: " + manifest.string());
  out << doc.dump(2) << '\n';
  return manifest;
}

}  // namespace abn::data
