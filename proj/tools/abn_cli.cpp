// abn: command-line front door.
//
// Output layout under --out (default "."):
//   data/         manifest.json, images/, masks/
//   checkpoints/  baseline.ckpt, embedded.ckpt
//   reports/      train.json, finetune.json, eval.json, quiz-report.json
//   records/      tutor sessions and quizzes written by `serve`
//
// Environment: ABN_PORT overrides the serve port default, ABN_DATA_DIR the
// data directory default.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "abn/data/dataset.hpp"
#include "abn/data/synthetic.hpp"
#include "abn/embed/knowledge.hpp"
#include "abn/eval/metrics.hpp"
#include "abn/model/checkpoint.hpp"
#include "abn/model/train.hpp"
#include "abn/tutor/api.hpp"
#include "abn/tutor/service.hpp"
#include "abn/tutor/store.hpp"

// after the Eigen-based headers: resolv.h defines a _res macro
#include <httplib.h>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace abn;

namespace {

struct Common {
  fs::path out = ".";
  std::uint64_t seed = 42;
  bool force = false;
  std::string data_dir;  // empty: <out>/data or ABN_DATA_DIR

  fs::path data() const {
    if (!data_dir.empty()) return data_dir;
    if (const char* env = std::getenv("ABN_DATA_DIR"); env && *env) return env;
    return out / "data";
  }
  fs::path manifest() const { return data() / "manifest.json"; }
  fs::path checkpoints() const { return out / "checkpoints"; }
  fs::path reports() const { return out / "reports"; }
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw UsageError(what + " not found: " + p.string());
}

void require_fresh(const std::vector<fs::path>& outputs, bool force) {
  if (force) return;
  for (const auto& p : outputs) {
    if (fs::exists(p)) {
      throw UsageError(p.string() + " already exists; pass --force to overwrite");
    }
  }
}

void write_json(const fs::path& path, const json& j) {
  tutor::write_atomic(path, j.dump(2) + "\n");
}

void save_model(const model::AbnModel& m, const fs::path& path) {
  fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  model::save_checkpoint(m, tmp);
  fs::rename(tmp, path);
}

json epoch_log_json(const std::vector<model::EpochLog>& log) {
  json a = json::array();
  for (const auto& e : log) {
    a.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss},
                 {"train_accuracy", e.train_accuracy}});
  }
  return a;
}

json config_json(const model::TrainConfig& c) {
  return {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"lr", c.lr},
          {"momentum", c.momentum}, {"seed", c.seed}, {"lambda", c.lambda},
          {"clip_norm", c.clip_norm}};
}

void add_train_flags(CLI::App* cmd, model::TrainConfig& c) {
  cmd->add_option("--epochs", c.epochs, "Epochs")->check(CLI::PositiveNumber);
  cmd->add_option("--batch-size", c.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  cmd->add_option("--lr", c.lr, "Learning rate")->check(CLI::PositiveNumber);
  cmd->add_option("--momentum", c.momentum, "SGD momentum")->check(CLI::Range(0.0, 0.999999));
  cmd->add_option("--clip-norm", c.clip_norm, "Gradient-norm cap, 0 = off")
      ->check(CLI::NonNegativeNumber);
}

int cmd_gen_data(const Common& c, std::size_t image_size) {
  const auto dir = c.data();
  require_fresh({dir / "manifest.json"}, c.force);
  const auto ds = data::generate_corpus(c.seed, {}, image_size);
  const auto manifest = data::write_dataset(ds, dir);
  std::cout << "wrote " << ds.size() << " samples to " << manifest.string() << "\n";
  return 0;
}

int cmd_train(const Common& c, model::TrainConfig cfg) {
  require_file(c.manifest(), "manifest");
  const auto ckpt = c.checkpoints() / "baseline.ckpt";
  const auto report = c.reports() / "train.json";
  require_fresh({ckpt, report}, c.force);
  cfg.seed = c.seed;
  const auto ds = data::load_dataset(c.manifest());
  const auto train = ds.split(data::Split::kTrain);
  const auto test = ds.split(data::Split::kTest);
  model::AbnModel init(model::ArchConfig{}, c.seed);
  auto result = model::train(init, train, cfg);
  result.model.set_tag("baseline");
  const double test_acc = test.empty() ? 0.0 : eval::accuracy(result.model, test);
  save_model(result.model, ckpt);
  write_json(report, {{"config", config_json(cfg)},
                      {"initial_loss", result.initial_loss},
                      {"final_loss", result.final_loss},
                      {"test_accuracy", test_acc},
                      {"epochs", epoch_log_json(result.log)}});
  std::cout << "baseline: loss " << result.initial_loss << " -> " << result.final_loss
            << ", test accuracy " << test_acc << "\n"
            << "wrote " << ckpt.string() << "\n";
  return 0;
}

int cmd_embed(const Common& c, model::TrainConfig cfg, fs::path input) {
  if (input.empty()) input = c.checkpoints() / "baseline.ckpt";
  require_file(input, "checkpoint");
  require_file(c.manifest(), "manifest");
  const auto ckpt = c.checkpoints() / "embedded.ckpt";
  const auto report = c.reports() / "finetune.json";
  require_fresh({ckpt, report}, c.force);
  cfg.seed = c.seed;
  const auto base = model::load_checkpoint<float>(input, model::ArchConfig{});
  const auto ds = data::load_dataset(c.manifest());
  const auto train = ds.split(data::Split::kTrain);
  const auto maps = embed::expert_maps_from(train, base.arch());
  auto result = embed::finetune(base, train, maps, cfg);
  result.model.set_tag("embedded");
  save_model(result.model, ckpt);
  const auto& r = result.report;
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"mean_la", e.mean_la}, {"mean_lp", e.mean_lp},
                      {"mean_lm", e.mean_lm}});
  }
  write_json(report, {{"config", config_json(cfg)},
                      {"n_expert", r.n_expert},
                      {"pre_accuracy", r.pre_accuracy}, {"post_accuracy", r.post_accuracy},
                      {"pre_mean_lm", r.pre_mean_lm}, {"post_mean_lm", r.post_mean_lm},
                      {"pre_mean_iou", r.pre_mean_iou}, {"post_mean_iou", r.post_mean_iou},
                      {"extractor_hash_before", embed::extractor_hash(base)},
                      {"extractor_hash_after", embed::extractor_hash(result.model)},
                      {"epochs", epochs}});
  std::cout << "knowledge embedding on " << r.n_expert << " expert maps: L_m "
            << r.pre_mean_lm << " -> " << r.post_mean_lm << ", IoU " << r.pre_mean_iou
            << " -> " << r.post_mean_iou << "\nwrote " << ckpt.string() << "\n";
  return 0;
}

int cmd_eval(const Common& c, std::vector<fs::path> ckpts, const std::string& split,
             double threshold) {
  if (ckpts.empty()) {
    ckpts = {c.checkpoints() / "baseline.ckpt", c.checkpoints() / "embedded.ckpt"};
  }
  for (const auto& p : ckpts) require_file(p, "checkpoint");
  require_file(c.manifest(), "manifest");
  const auto report = c.reports() / "eval.json";
  require_fresh({report}, c.force);
  const auto ds = data::load_dataset(c.manifest());
  const auto samples = ds.split(data::parse_split(split));
  if (samples.empty()) throw UsageError("split '" + split + "' is empty");
  std::vector<eval::EvalReport> reports;
  json rows = json::array();
  for (const auto& p : ckpts) {
    auto m = model::load_checkpoint<float>(p, model::ArchConfig{});
    if (m.tag().empty()) m.set_tag(p.stem().string());
    reports.push_back(eval::attention_iou_report(m, samples, threshold));
    auto j = eval::to_json(reports.back());
    j["checkpoint"] = p.string();
    rows.push_back(std::move(j));
  }
  write_json(report, {{"schema_version", 1}, {"split", split}, {"reports", rows}});
  std::cout << eval::format_table(reports);
  return 0;
}

tutor::Teacher make_teacher(const Common& c, const fs::path& ckpt, bool expert_reveal) {
  require_file(ckpt, "checkpoint");
  require_file(c.manifest(), "manifest");
  auto m = std::make_shared<const model::AbnModel>(
      model::load_checkpoint<float>(ckpt, model::ArchConfig{}));
  tutor::TeacherConfig tc;
  tc.reveal_expert_mask = expert_reveal;
  return tutor::Teacher(m, data::load_dataset(c.manifest()), tc);
}

int cmd_serve(const Common& c, const fs::path& ckpt, int port, const std::string& host,
              fs::path records, bool expert_reveal) {
  if (records.empty()) records = c.out / "records";
  auto teacher = std::make_shared<const tutor::Teacher>(make_teacher(c, ckpt, expert_reveal));
  auto store = std::make_shared<const tutor::RecordStore>(records);
  tutor::TutorService service(teacher, store);
  httplib::Server server;
  tutor::mount(server, service);
  std::cout << "serving " << ckpt.string() << " on http://" << host << ":" << port
            << " (records in " << records.string() << ")" << std::endl;
  if (!server.listen(host, port)) {
    std::cerr << "error: cannot listen on " << host << ":" << port << "\n";
    return 1;
  }
  return 0;
}

int cmd_quiz_report(const Common& c, const fs::path& ckpt, fs::path records,
                    std::vector<std::string> learners) {
  if (records.empty()) records = c.out / "records";
  if (!fs::is_directory(records)) throw UsageError("records directory not found: " + records.string());
  const auto report = c.reports() / "quiz-report.json";
  require_fresh({report}, c.force);
  auto teacher = std::make_shared<const tutor::Teacher>(make_teacher(c, ckpt, false));
  auto store = std::make_shared<const tutor::RecordStore>(records);
  tutor::TutorService service(teacher, store);
  if (learners.empty()) {
    std::set<std::string> ids;
    for (const auto& id : store->quiz_ids()) ids.insert(store->load_quiz(id).learner_id);
    for (const auto& id : store->session_ids()) ids.insert(store->load_session(id).learner_id);
    learners.assign(ids.begin(), ids.end());
  }
  json rows = json::array();
  auto fmt = [](const std::optional<double>& v) {
    return v ? std::to_string(*v) : std::string("-");
  };
  for (const auto& l : learners) {
    const auto r = service.report(l);
    rows.push_back(tutor::to_json(r));
    std::cout << l << ": pre " << fmt(r.pre_accuracy) << " post " << fmt(r.post_accuracy)
              << " mean mask IoU " << fmt(r.mean_mask_iou) << " (" << r.mask_ious.size()
              << " masks)\n";
  }
  write_json(report, {{"schema_version", 1}, {"learners", rows}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention branch network tutor: data, training, knowledge embedding, "
               "evaluation and the learner service"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--out", common.out, "Output root (data/, checkpoints/, reports/)");
    cmd->add_option("--seed", common.seed, "Seed for every random choice");
    cmd->add_flag("--force", common.force, "Overwrite existing outputs");
    cmd->add_option("--data-dir", common.data_dir, "Data directory (default <out>/data)");
  };

  std::size_t image_size = 64;
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic fundus corpus");
  add_common(gen);
  gen->add_option("--image-size", image_size, "Image side in pixels")->check(CLI::Range(32, 1024));

  model::TrainConfig train_cfg;
  auto* train = app.add_subcommand("train", "Train the baseline model");
  add_common(train);
  add_train_flags(train, train_cfg);

  model::TrainConfig ft_cfg = embed::default_finetune_config();
  fs::path embed_input;
  auto* emb = app.add_subcommand("embed-knowledge", "Fine-tune with expert attention maps");
  add_common(emb);
  add_train_flags(emb, ft_cfg);
  emb->add_option("--lambda", ft_cfg.lambda, "Weight of the map-matching loss")
      ->check(CLI::NonNegativeNumber);
  emb->add_option("--checkpoint", embed_input, "Input checkpoint (default baseline)");

  std::vector<fs::path> eval_ckpts;
  std::string eval_split = "test";
  double threshold = eval::kDefaultThreshold;
  auto* ev = app.add_subcommand("eval", "Accuracy and attention IoU report");
  add_common(ev);
  ev->add_option("--checkpoint", eval_ckpts, "Checkpoints to compare (repeatable)");
  ev->add_option("--split", eval_split, "Split: train, test or quiz");
  ev->add_option("--threshold", threshold, "Map binarization threshold")
      ->check(CLI::Range(0.0, 1.0));

  fs::path serve_ckpt;
  int port = 8080;
  if (const char* env = std::getenv("ABN_PORT"); env && *env) port = std::atoi(env);
  std::string host = "127.0.0.1";
  fs::path records;
  bool expert_reveal = false;
  auto* serve = app.add_subcommand("serve", "Run the tutor HTTP service");
  add_common(serve);
  serve->add_option("--checkpoint", serve_ckpt, "Teacher checkpoint")->required();
  serve->add_option("--port", port, "Port (default $ABN_PORT or 8080)")->check(CLI::Range(1, 65535));
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--records", records, "Session store (default <out>/records)");
  serve->add_flag("--reveal-expert-mask", expert_reveal,
                  "Include the expert mask in reveal payloads");

  fs::path quiz_ckpt;
  std::vector<std::string> learners;
  auto* quiz = app.add_subcommand("quiz-report", "Pre/post quiz accuracy and mask IoU per learner");
  add_common(quiz);
  quiz->add_option("--checkpoint", quiz_ckpt, "Checkpoint the sessions were served with")
      ->required();
  quiz->add_option("--records", records, "Session store (default <out>/records)");
  quiz->add_option("--learner", learners, "Learner ids (default: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen_data(common, image_size);
    if (*train) return cmd_train(common, train_cfg);
    if (*emb) return cmd_embed(common, ft_cfg, embed_input);
    if (*ev) return cmd_eval(common, eval_ckpts, eval_split, threshold);
    if (*serve) return cmd_serve(common, serve_ckpt, port, host, records, expert_reveal);
    if (*quiz) return cmd_quiz_report(common, quiz_ckpt, records, learners);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
