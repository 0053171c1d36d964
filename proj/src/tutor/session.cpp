#include "abn/tutor/session.hpp"

#include <algorithm>
#include <random>

#include "abn/eval/metrics.hpp"

namespace abn::tutor {
namespace {

void require_state(const TutorSession& s, State want, const char* action) {
  if (s.state != want) {
    throw StateError(std::string(action) + ": session " + s.session_id + " is in state " +
                     std::string(state_name(s.state)) + ", expected " +
                     std::string(state_name(want)));
  }
}

void move_to(TutorSession& s, State to, std::string action) {
  std::optional<State> from;
  if (!s.transitions.empty()) from = s.state;
  if (!is_legal_transition(from, to)) {
    throw StateError("illegal transition " +
                     (from ? std::string(state_name(*from)) : std::string("start")) +
                     " -> " + std::string(state_name(to)));
  }
  s.transitions.push_back({from, to, std::move(action)});
  s.state = to;
}

void serve_next(TutorSession& s, const Teacher& teacher, std::int64_t now_ms,
                const char* action) {
  std::vector<const std::string*> remaining;
  for (const auto& id : teacher.training_pool()) {
    if (std::find(s.served.begin(), s.served.end(), id) == s.served.end()) {
      remaining.push_back(&id);
    }
  }
  s.edits.clear();
  s.judged_label.reset();
  s.judgment_correct = false;
  if (remaining.empty()) {
    s.current_sample_id.clear();
    move_to(s, State::kFinished, action);
    return;
  }
  std::uniform_int_distribution<std::size_t> pick(0, remaining.size() - 1);
  s.current_sample_id = *remaining[pick(s.rng)];
  s.served.push_back(s.current_sample_id);
  s.served_ms = now_ms;
  move_to(s, State::kAwaitJudgment, action);
}

void record_outcome(TutorSession& s, std::int64_t now_ms) {
  SampleOutcome o;
  o.sample_id = s.current_sample_id;
  o.judged_label = s.judged_label.value_or(-1);
  o.correct = s.judgment_correct;
  o.edits = s.edits;
  o.served_ms = s.served_ms;
  o.finished_ms = now_ms;
  s.outcomes.push_back(std::move(o));
}

}  // namespace

std::string_view state_name(State s) {
  switch (s) {
    case State::kAwaitJudgment: return "AwaitJudgment";
    case State::kEditLoop: return "EditLoop";
    case State::kReveal: return "Reveal";
    case State::kFinished: return "Finished";
  }
  return "?";
}

State parse_state(std::string_view name) {
  for (State s : {State::kAwaitJudgment, State::kEditLoop, State::kReveal, State::kFinished}) {
    if (state_name(s) == name) return s;
  }
  throw ValueError("unknown session state '" + std::string(name) + "'");
}

bool is_legal_transition(std::optional<State> from, State to) {
  if (!from) return to == State::kAwaitJudgment || to == State::kFinished;
  switch (*from) {
    case State::kAwaitJudgment: return to == State::kReveal || to == State::kEditLoop;
    case State::kEditLoop: return to == State::kEditLoop || to == State::kReveal;
    case State::kReveal: return to == State::kAwaitJudgment || to == State::kFinished;
    case State::kFinished: return false;
  }
  return false;
}

Teacher::Teacher(std::shared_ptr<const model::AbnModel> model, data::Dataset dataset,
                 TeacherConfig config)
    : model_(std::move(model)), dataset_(std::move(dataset)), config_(config) {
  if (!model_) throw ValueError("Teacher: model is null");
  if (!(config_.iou_threshold > 0 && config_.iou_threshold < 1)) {
    throw ValueError("Teacher: iou_threshold must be in (0, 1)");
  }
  const auto n = model_->arch().input_size;
  for (const auto& s : dataset_.samples) {
    if (s.image.shape() != nn::Shape{n, n}) {
      throw ShapeError("Teacher: sample " + s.id + " is " + nn::shape_str(s.image.shape()) +
                       ", model expects " + nn::shape_str({n, n}));
    }
    if (s.split == data::Split::kTrain) train_ids_.push_back(s.id);
    if (s.split == data::Split::kQuiz) quiz_ids_.push_back(s.id);
  }
}

const data::LabeledSample& Teacher::sample(std::string_view id) const {
  const auto* s = dataset_.find(id);
  if (!s) throw NotFoundError("unknown sample '" + std::string(id) + "'");
  return *s;
}

TutorSession start_session(const Teacher& teacher, std::string session_id,
                           std::string learner_id, std::uint64_t seed,
                           std::int64_t now_ms) {
  TutorSession s;
  s.session_id = std::move(session_id);
  s.learner_id = std::move(learner_id);
  s.seed = seed;
  s.rng.seed(seed);
  serve_next(s, teacher, now_ms, "start");
  return s;
}

SampleView current_sample(const TutorSession& s, const Teacher& teacher) {
  SampleView v;
  v.state = s.state;
  if (s.state == State::kFinished) return v;
  v.sample_id = s.current_sample_id;
  v.image = &teacher.sample(s.current_sample_id).image;
  return v;
}

SampleView next_sample(TutorSession& s, const Teacher& teacher, std::int64_t now_ms) {
  require_state(s, State::kReveal, "next");
  serve_next(s, teacher, now_ms, "next");
  return current_sample(s, teacher);
}

JudgmentFeedback submit_judgment(TutorSession& s, const Teacher& teacher, int label,
                                 std::int64_t now_ms) {
  require_state(s, State::kAwaitJudgment, "judgment");
  const auto& sample = teacher.sample(s.current_sample_id);
  if (label < 0 || static_cast<std::size_t>(label) >= teacher.model().arch().num_classes) {
    throw ValueError("judgment: label " + std::to_string(label) + " out of range");
  }
  s.judged_label = label;
  s.judgment_correct = label == sample.label;
  JudgmentFeedback fb{s.judgment_correct, std::nullopt};
  if (s.judgment_correct) {
    move_to(s, State::kReveal, "judgment");
    record_outcome(s, now_ms);
  } else {
    fb.correct_label = sample.label;
    move_to(s, State::kEditLoop, "judgment");
  }
  return fb;
}

EditResponse submit_edit(TutorSession& s, const Teacher& teacher, BinaryMask mask,
                         std::int64_t now_ms) {
  require_state(s, State::kEditLoop, "edit");
  const auto& sample = teacher.sample(s.current_sample_id);
  auto edit = guided::make_edit(s.current_sample_id, std::move(mask), teacher.model().arch());
  EditResponse r;
  r.result = guided::guided_forward(teacher.model(), sample.image, edit);
  r.history_index = s.edits.size();
  r.hint = r.result.probabilities[static_cast<std::size_t>(sample.label)] >
           teacher.config().hint_threshold;
  move_to(s, State::kEditLoop, "edit");
  s.edits.push_back({std::move(edit.mask_image), r.result, now_ms});
  return r;
}

RevealPayload reveal(TutorSession& s, const Teacher& teacher, std::int64_t now_ms) {
  if (s.state == State::kEditLoop) {
    if (s.edits.empty()) {
      throw StateError("finish-edit: session " + s.session_id +
                       " has no edits yet; submit at least one mask first");
    }
    move_to(s, State::kReveal, "finish-edit");
    record_outcome(s, now_ms);
  } else if (s.state != State::kReveal) {
    throw StateError("reveal: session " + s.session_id + " is in state " +
                     std::string(state_name(s.state)) + ", expected EditLoop or Reveal");
  }
  const auto& sample = teacher.sample(s.current_sample_id);
  RevealPayload p;
  p.sample_id = sample.id;
  p.correct_label = sample.label;
  const auto out = teacher.model().forward(sample.image);
  p.model_map = eval::upsample_nearest(out.attention_map.value(), sample.height(),
                                       sample.width());
  if (!s.edits.empty()) p.learner_mask = s.edits.back().mask;
  if (teacher.config().reveal_expert_mask && sample.expert_mask) {
    p.expert_mask = sample.expert_mask;
  }
  return p;
}

}  // namespace abn::tutor
