#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "abn/data/dataset.hpp"
#include "abn/guided/guided.hpp"
#include "abn/model/abn_model.hpp"

namespace abn::tutor {

using data::BinaryMask;

// Learning-loop states. Legal moves:
//   (start)        -> AwaitJudgment | Finished
//   AwaitJudgment  -> Reveal (correct answer) | EditLoop (wrong answer)
//   EditLoop       -> EditLoop (edit) | Reveal (finish)
//   Reveal         -> AwaitJudgment (next) | Finished (pool exhausted)
enum class State { kAwaitJudgment, kEditLoop, kReveal, kFinished };

std::string_view state_name(State s);
State parse_state(std::string_view name);
bool is_legal_transition(std::optional<State> from, State to);

struct TeacherConfig {
  // Serve the expert's mask in the reveal payload as well as the model map.
  bool reveal_expert_mask = false;
  // Correct-class probability above which the UI is told to show a hint.
  double hint_threshold = 0.8;
  // Binarization threshold for IoU figures in reports.
  double iou_threshold = 0.5;
};

// Everything a session reads but never mutates: the teaching model and
// the sample pools. Shared read-only between sessions.
class Teacher {
 public:
  Teacher(std::shared_ptr<const model::AbnModel> model, data::Dataset dataset,
          TeacherConfig config = {});

  const model::AbnModel& model() const { return *model_; }
  const TeacherConfig& config() const { return config_; }
  const data::Dataset& dataset() const { return dataset_; }
  const std::vector<std::string>& training_pool() const { return train_ids_; }
  const std::vector<std::string>& quiz_pool() const { return quiz_ids_; }

  // Throws NotFoundError.
  const data::LabeledSample& sample(std::string_view id) const;

 private:
  std::shared_ptr<const model::AbnModel> model_;
  data::Dataset dataset_;
  TeacherConfig config_;
  std::vector<std::string> train_ids_;
  std::vector<std::string> quiz_ids_;
};

struct EditRecord {
  BinaryMask mask;  // image resolution, as painted
  guided::GuidedResult result;
  std::int64_t timestamp_ms = 0;

  friend bool operator==(const EditRecord&, const EditRecord&) = default;
};

struct SampleOutcome {
  std::string sample_id;
  int judged_label = 0;
  bool correct = false;
  std::vector<EditRecord> edits;
  std::int64_t served_ms = 0;
  std::int64_t finished_ms = 0;

  const BinaryMask* final_mask() const {
    return edits.empty() ? nullptr : &edits.back().mask;
  }
  friend bool operator==(const SampleOutcome&, const SampleOutcome&) = default;
};

struct Transition {
  std::optional<State> from;
  State to = State::kAwaitJudgment;
  std::string action;
  friend bool operator==(const Transition&, const Transition&) = default;
};

struct TutorSession {
  std::string session_id;
  std::string learner_id;
  std::uint64_t seed = 0;
  std::mt19937_64 rng;
  State state = State::kAwaitJudgment;
  std::string current_sample_id;
  std::optional<int> judged_label;
  bool judgment_correct = false;
  std::int64_t served_ms = 0;
  std::vector<EditRecord> edits;  // for the current sample
  std::vector<SampleOutcome> outcomes;
  std::vector<std::string> served;  // in serving order
  std::vector<Transition> transitions;

  std::size_t samples_served() const { return served.size(); }
  friend bool operator==(const TutorSession&, const TutorSession&) = default;
};

struct SampleView {
  std::string sample_id;
  const nn::Tensor<float>* image = nullptr;  // null once finished
  State state = State::kAwaitJudgment;
};

struct JudgmentFeedback {
  bool correct = false;
  std::optional<int> correct_label;  // disclosed only when wrong
};

struct EditResponse {
  guided::GuidedResult result;
  std::size_t history_index = 0;
  bool hint = false;  // correct-class probability above the hint threshold
};

struct RevealPayload {
  std::string sample_id;
  int correct_label = 0;
  nn::Tensor<float> model_map;  // image resolution, continuous [0,1]
  std::optional<BinaryMask> learner_mask;
  std::optional<BinaryMask> expert_mask;
};

// Creates a session and serves its first sample.
TutorSession start_session(const Teacher& teacher, std::string session_id,
                           std::string learner_id, std::uint64_t seed,
                           std::int64_t now_ms);

SampleView current_sample(const TutorSession& s, const Teacher& teacher);

// Reveal -> next unserved training sample (uniform over the remainder),
// or Finished once every sample has been served.
SampleView next_sample(TutorSession& s, const Teacher& teacher, std::int64_t now_ms);

JudgmentFeedback submit_judgment(TutorSession& s, const Teacher& teacher, int label,
                                 std::int64_t now_ms);

// Runs guided inference with the painted mask; state stays EditLoop.
// Invalid masks are rejected before anything is recorded.
EditResponse submit_edit(TutorSession& s, const Teacher& teacher, BinaryMask mask,
                         std::int64_t now_ms);

// From EditLoop (at least one edit) moves to Reveal; in Reveal it only
// re-reads the payload.
RevealPayload reveal(TutorSession& s, const Teacher& teacher, std::int64_t now_ms);

}  // namespace abn::tutor
