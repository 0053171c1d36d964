#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "abn/tutor/quiz.hpp"
#include "abn/tutor/session.hpp"
#include "abn/tutor/store.hpp"

namespace abn::tutor {

using Clock = std::function<std::int64_t()>;  // milliseconds

Clock system_clock();

struct LearnerReport {
  std::string learner_id;
  std::string model_tag;
  std::optional<double> pre_accuracy;   // present once the pre quiz is complete
  std::optional<double> post_accuracy;
  std::size_t pre_answered = 0;
  std::size_t post_answered = 0;
  // Class IoU of each final learner mask against the expert mask of the
  // same sample, for samples that had both.
  std::vector<double> mask_ious;
  std::optional<double> mean_mask_iou;
  std::size_t samples_studied = 0;
};

nlohmann::json to_json(const LearnerReport& r);

// Owns every session and quiz. Distinct sessions proceed in parallel;
// actions on one session are serialized.
class TutorService {
 public:
  // `store` may be null for an in-memory service. Existing records in the
  // store are loaded so interrupted sessions resume.
  TutorService(std::shared_ptr<const Teacher> teacher,
               std::shared_ptr<const RecordStore> store = nullptr,
               Clock clock = system_clock());

  const Teacher& teacher() const { return *teacher_; }

  // Seed defaults to a value derived from the session id.
  std::string create_session(const std::string& learner_id,
                             std::optional<std::uint64_t> seed = std::nullopt);
  TutorSession session(const std::string& id) const;  // snapshot
  std::vector<std::string> session_ids() const;

  SampleView sample(const std::string& id) const;
  JudgmentFeedback judgment(const std::string& id, int label);
  EditResponse edit(const std::string& id, BinaryMask mask);
  RevealPayload finish_edit(const std::string& id);
  SampleView next(const std::string& id);

  // ConflictError if the learner already has a quiz in that phase.
  std::string create_quiz(const std::string& learner_id, QuizPhase phase,
                          std::optional<std::uint64_t> seed = std::nullopt);
  QuizRecord quiz(const std::string& id) const;
  // Sample view of the next question; empty id once complete.
  SampleView quiz_sample(const std::string& id) const;
  // Records the answer; returns the number of questions left.
  std::size_t quiz_answer(const std::string& id, int label);

  LearnerReport report(const std::string& learner_id) const;

 private:
  struct SessionSlot {
    mutable std::mutex mu;
    TutorSession session;
  };
  struct QuizSlot {
    mutable std::mutex mu;
    QuizRecord quiz;
  };

  std::shared_ptr<SessionSlot> session_slot(const std::string& id) const;
  std::shared_ptr<QuizSlot> quiz_slot(const std::string& id) const;
  std::string fresh_id(const char* prefix, std::size_t& counter);

  template <typename F>
  auto with_session(const std::string& id, F&& f);

  std::shared_ptr<const Teacher> teacher_;
  std::shared_ptr<const RecordStore> store_;
  Clock clock_;

  mutable std::shared_mutex mu_;  // guards the maps and counters below
  std::map<std::string, std::shared_ptr<SessionSlot>> sessions_;
  std::map<std::string, std::shared_ptr<QuizSlot>> quizzes_;
  std::size_t session_counter_ = 0;
  std::size_t quiz_counter_ = 0;
};

}  // namespace abn::tutor
