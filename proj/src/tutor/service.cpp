#include "abn/tutor/service.hpp"

#include <chrono>
#include <cstdio>
#include <numeric>

#include "abn/eval/metrics.hpp"

namespace abn::tutor {
namespace {

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t counter_of(const std::string& id) {
  const auto dash = id.find('-');
  if (dash == std::string::npos) return 0;
  try {
    return static_cast<std::size_t>(std::stoull(id.substr(dash + 1)));
  } catch (const std::exception&) {
    return 0;
  }
}

}  // namespace

Clock system_clock() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

nlohmann::json to_json(const LearnerReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"schema_version", kRecordSchemaVersion},
          {"learner_id", r.learner_id},
          {"model_tag", r.model_tag},
          {"pre_accuracy", opt(r.pre_accuracy)},
          {"post_accuracy", opt(r.post_accuracy)},
          {"pre_answered", r.pre_answered},
          {"post_answered", r.post_answered},
          {"mask_ious", r.mask_ious},
          {"mean_mask_iou", opt(r.mean_mask_iou)},
          {"samples_studied", r.samples_studied}};
}

TutorService::TutorService(std::shared_ptr<const Teacher> teacher,
                           std::shared_ptr<const RecordStore> store, Clock clock)
    : teacher_(std::move(teacher)), store_(std::move(store)), clock_(std::move(clock)) {
  if (!teacher_) throw ValueError("TutorService: teacher is null");
  if (!clock_) throw ValueError("TutorService: clock is empty");
  if (!store_) return;
  for (const auto& id : store_->session_ids()) {
    auto slot = std::make_shared<SessionSlot>();
    slot->session = store_->load_session(id);
    session_counter_ = std::max(session_counter_, counter_of(id));
    sessions_.emplace(id, std::move(slot));
  }
  for (const auto& id : store_->quiz_ids()) {
    auto slot = std::make_shared<QuizSlot>();
    slot->quiz = store_->load_quiz(id);
    quiz_counter_ = std::max(quiz_counter_, counter_of(id));
    quizzes_.emplace(id, std::move(slot));
  }
}

std::string TutorService::fresh_id(const char* prefix, std::size_t& counter) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%06zu", prefix, ++counter);
  return buf;
}

std::shared_ptr<TutorService::SessionSlot> TutorService::session_slot(
    const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session '" + id + "'");
  return it->second;
}

std::shared_ptr<TutorService::QuizSlot> TutorService::quiz_slot(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = quizzes_.find(id);
  if (it == quizzes_.end()) throw NotFoundError("unknown quiz '" + id + "'");
  return it->second;
}

template <typename F>
auto TutorService::with_session(const std::string& id, F&& f) {
  auto slot = session_slot(id);
  std::lock_guard lock(slot->mu);
  // Work on a copy so a failed save leaves the live session untouched.
  TutorSession work = slot->session;
  auto result = f(work);
  if (store_) store_->save(work);
  slot->session = std::move(work);
  return result;
}

std::string TutorService::create_session(const std::string& learner_id,
                                         std::optional<std::uint64_t> seed) {
  if (learner_id.empty()) throw ValueError("learner_id must not be empty");
  std::string id;
  {
    std::unique_lock lock(mu_);
    id = fresh_id("s", session_counter_);
  }
  auto slot = std::make_shared<SessionSlot>();
  slot->session = start_session(*teacher_, id, learner_id, seed.value_or(fnv1a(id)), clock_());
  if (store_) store_->save(slot->session);
  std::unique_lock lock(mu_);
  sessions_.emplace(id, std::move(slot));
  return id;
}

TutorSession TutorService::session(const std::string& id) const {
  auto slot = session_slot(id);
  std::lock_guard lock(slot->mu);
  return slot->session;
}

std::vector<std::string> TutorService::session_ids() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> ids;
  for (const auto& [id, _] : sessions_) ids.push_back(id);
  return ids;
}

SampleView TutorService::sample(const std::string& id) const {
  auto slot = session_slot(id);
  std::lock_guard lock(slot->mu);
  return current_sample(slot->session, *teacher_);
}

JudgmentFeedback TutorService::judgment(const std::string& id, int label) {
  return with_session(id, [&](TutorSession& s) {
    return submit_judgment(s, *teacher_, label, clock_());
  });
}

EditResponse TutorService::edit(const std::string& id, BinaryMask mask) {
  return with_session(id, [&](TutorSession& s) {
    return submit_edit(s, *teacher_, std::move(mask), clock_());
  });
}

RevealPayload TutorService::finish_edit(const std::string& id) {
  return with_session(id, [&](TutorSession& s) { return reveal(s, *teacher_, clock_()); });
}

SampleView TutorService::next(const std::string& id) {
  return with_session(id, [&](TutorSession& s) { return next_sample(s, *teacher_, clock_()); });
}

std::string TutorService::create_quiz(const std::string& learner_id, QuizPhase phase,
                                      std::optional<std::uint64_t> seed) {
  if (learner_id.empty()) throw ValueError("learner_id must not be empty");
  std::unique_lock lock(mu_);
  for (const auto& [qid, slot] : quizzes_) {
    std::lock_guard ql(slot->mu);
    if (slot->quiz.learner_id == learner_id && slot->quiz.phase == phase) {
      throw ConflictError("learner '" + learner_id + "' already has a " +
                          std::string(phase_name(phase)) + " quiz (" + qid + ")");
    }
  }
  std::size_t counter = quiz_counter_;
  const std::string id = fresh_id("q", counter);
  auto slot = std::make_shared<QuizSlot>();
  slot->quiz = start_quiz(*teacher_, id, learner_id, phase,
                          seed.value_or(fnv1a(learner_id + "/" + std::string(phase_name(phase)))),
                          clock_());
  if (store_) store_->save(slot->quiz);
  quiz_counter_ = counter;
  quizzes_.emplace(id, std::move(slot));
  return id;
}

QuizRecord TutorService::quiz(const std::string& id) const {
  auto slot = quiz_slot(id);
  std::lock_guard lock(slot->mu);
  return slot->quiz;
}

SampleView TutorService::quiz_sample(const std::string& id) const {
  auto slot = quiz_slot(id);
  std::lock_guard lock(slot->mu);
  SampleView v;
  v.state = State::kAwaitJudgment;
  if (auto cur = slot->quiz.current()) {
    v.sample_id = *cur;
    v.image = &teacher_->sample(*cur).image;
  } else {
    v.state = State::kFinished;
  }
  return v;
}

std::size_t TutorService::quiz_answer(const std::string& id, int label) {
  auto slot = quiz_slot(id);
  std::lock_guard lock(slot->mu);
  QuizRecord work = slot->quiz;
  answer_quiz(work, *teacher_, label, clock_());
  if (store_) store_->save(work);
  slot->quiz = std::move(work);
  return slot->quiz.remaining();
}

LearnerReport TutorService::report(const std::string& learner_id) const {
  LearnerReport r;
  r.learner_id = learner_id;
  r.model_tag = teacher_->model().tag();
  std::vector<std::shared_ptr<SessionSlot>> sessions;
  std::vector<std::shared_ptr<QuizSlot>> quizzes;
  {
    std::shared_lock lock(mu_);
    for (const auto& [_, s] : sessions_) sessions.push_back(s);
    for (const auto& [_, q] : quizzes_) quizzes.push_back(q);
  }
  bool known = false;
  for (const auto& slot : quizzes) {
    std::lock_guard lock(slot->mu);
    const auto& q = slot->quiz;
    if (q.learner_id != learner_id) continue;
    known = true;
    const bool pre = q.phase == QuizPhase::kPre;
    (pre ? r.pre_answered : r.post_answered) = q.answers.size();
    if (q.complete()) (pre ? r.pre_accuracy : r.post_accuracy) = q.accuracy();
  }
  for (const auto& slot : sessions) {
    std::lock_guard lock(slot->mu);
    const auto& s = slot->session;
    if (s.learner_id != learner_id) continue;
    known = true;
    r.samples_studied += s.outcomes.size();
    for (const auto& o : s.outcomes) {
      const auto* mask = o.final_mask();
      const auto& sample = teacher_->sample(o.sample_id);
      if (mask && sample.expert_mask) {
        r.mask_ious.push_back(eval::class_iou(*mask, *sample.expert_mask));
      }
    }
  }
  if (!known) throw NotFoundError("no sessions or quizzes for learner '" + learner_id + "'");
  if (!r.mask_ious.empty()) {
    r.mean_mask_iou = std::accumulate(r.mask_ious.begin(), r.mask_ious.end(), 0.0) /
                      static_cast<double>(r.mask_ious.size());
  }
  return r;
}

}  // namespace abn::tutor
