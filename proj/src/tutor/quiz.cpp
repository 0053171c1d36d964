#include "abn/tutor/quiz.hpp"

#include <algorithm>
#include <random>

#include "abn/tutor/session.hpp"

namespace abn::tutor {

std::string_view phase_name(QuizPhase p) { return p == QuizPhase::kPre ? "pre" : "post"; }

QuizPhase parse_phase(std::string_view name) {
  if (name == "pre") return QuizPhase::kPre;
  if (name == "post") return QuizPhase::kPost;
  throw ValueError("unknown quiz phase '" + std::string(name) + "' (expected pre or post)");
}

QuizRecord start_quiz(const Teacher& teacher, std::string quiz_id, std::string learner_id,
                      QuizPhase phase, std::uint64_t seed, std::int64_t now_ms) {
  if (teacher.quiz_pool().empty()) throw StateError("quiz: the quiz split is empty");
  QuizRecord q;
  q.quiz_id = std::move(quiz_id);
  q.learner_id = std::move(learner_id);
  q.phase = phase;
  q.seed = seed;
  q.sample_ids = teacher.quiz_pool();
  std::mt19937_64 rng(seed);
  std::shuffle(q.sample_ids.begin(), q.sample_ids.end(), rng);
  q.started_ms = now_ms;
  return q;
}

void answer_quiz(QuizRecord& q, const Teacher& teacher, int label, std::int64_t now_ms) {
  if (q.complete()) throw StateError("quiz " + q.quiz_id + " is already complete");
  if (label < 0 || static_cast<std::size_t>(label) >= teacher.model().arch().num_classes) {
    throw ValueError("quiz answer: label " + std::to_string(label) + " out of range");
  }
  const auto& sample = teacher.sample(q.sample_ids[q.answers.size()]);
  q.answers.push_back(label);
  q.answered_ms.push_back(now_ms);
  if (label == sample.label) ++q.correct;
}

std::size_t recount(const QuizRecord& q, const Teacher& teacher) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < q.answers.size(); ++i) {
    if (teacher.sample(q.sample_ids[i]).label == q.answers[i]) ++n;
  }
  return n;
}

}  // namespace abn::tutor
