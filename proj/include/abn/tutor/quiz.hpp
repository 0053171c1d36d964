#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace abn::tutor {

class Teacher;

enum class QuizPhase { kPre, kPost };

std::string_view phase_name(QuizPhase p);
QuizPhase parse_phase(std::string_view name);

// One pass over the fixed quiz split. No feedback is given while answering.
struct QuizRecord {
  std::string quiz_id;
  std::string learner_id;
  QuizPhase phase = QuizPhase::kPre;
  std::uint64_t seed = 0;
  std::vector<std::string> sample_ids;  // presentation order
  std::vector<int> answers;             // answers[i] is for sample_ids[i]
  std::vector<std::int64_t> answered_ms;
  std::size_t correct = 0;
  std::int64_t started_ms = 0;

  bool complete() const { return answers.size() == sample_ids.size(); }
  std::size_t remaining() const { return sample_ids.size() - answers.size(); }
  // Fraction correct over all quiz samples; only meaningful once complete.
  double accuracy() const {
    return sample_ids.empty() ? 0.0
                              : static_cast<double>(correct) /
                                    static_cast<double>(sample_ids.size());
  }
  // Next sample to answer, empty once complete.
  std::optional<std::string> current() const {
    if (complete()) return std::nullopt;
    return sample_ids[answers.size()];
  }

  friend bool operator==(const QuizRecord&, const QuizRecord&) = default;
};

// Quiz split in a seeded shuffled order. Every phase uses the same set.
QuizRecord start_quiz(const Teacher& teacher, std::string quiz_id, std::string learner_id,
                      QuizPhase phase, std::uint64_t seed, std::int64_t now_ms);

// Records an answer for the current sample; StateError once complete.
void answer_quiz(QuizRecord& q, const Teacher& teacher, int label, std::int64_t now_ms);

// Independent recount of exact matches.
std::size_t recount(const QuizRecord& q, const Teacher& teacher);

}  // namespace abn::tutor
