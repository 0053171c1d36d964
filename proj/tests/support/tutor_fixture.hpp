#pragma once

#include <memory>
#include <random>
#include <set>
#include <string>
#include <utility>

#include "abn/data/synthetic.hpp"
#include "abn/guided/guided.hpp"
#include "abn/tutor/service.hpp"
#include "abn/tutor/session.hpp"

namespace abn::test {

inline std::shared_ptr<const tutor::Teacher> make_teacher(const data::CorpusSizes& sizes,
                                                          bool reveal_expert = false,
                                                          std::uint64_t seed = 21) {
  auto model = std::make_shared<const model::AbnModel>(model::ArchConfig{}, seed);
  tutor::TeacherConfig cfg;
  cfg.reveal_expert_mask = reveal_expert;
  return std::make_shared<const tutor::Teacher>(model, data::generate_corpus(seed, sizes), cfg);
}

inline std::shared_ptr<const tutor::Teacher> small_teacher(bool reveal_expert = false) {
  return make_teacher({4, 4, 0, 0, 5, 5}, reveal_expert);
}

// Deterministic fake clock.
struct TickClock {
  std::shared_ptr<std::int64_t> t = std::make_shared<std::int64_t>(1000);
  tutor::Clock clock() const {
    auto p = t;
    return [p] { return (*p)++; };
  }
};

// Legal transitions, spelled out independently of the library.
inline bool legal_oracle(std::optional<tutor::State> from, tutor::State to) {
  using S = tutor::State;
  static const std::set<std::pair<int, int>> allowed = {
      {-1, int(S::kAwaitJudgment)},           {-1, int(S::kFinished)},
      {int(S::kAwaitJudgment), int(S::kReveal)}, {int(S::kAwaitJudgment), int(S::kEditLoop)},
      {int(S::kEditLoop), int(S::kEditLoop)},    {int(S::kEditLoop), int(S::kReveal)},
      {int(S::kReveal), int(S::kAwaitJudgment)}, {int(S::kReveal), int(S::kFinished)},
  };
  return allowed.count({from ? int(*from) : -1, int(to)}) > 0;
}

inline data::BinaryMask random_mask(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::bernoulli_distribution b(std::uniform_real_distribution<double>(0, 1)(rng));
  data::BinaryMask m(h, w);
  for (auto& v : m.bits) v = b(rng);
  return m;
}

struct FuzzStats {
  std::size_t actions = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

// One random action against `svc` on session `id`. Rejections are expected
// to throw one of the documented error kinds and leave the session as is.
inline bool fuzz_step(tutor::TutorService& svc, const std::string& id, std::mt19937_64& rng,
                      FuzzStats& stats) {
  const auto before = svc.session(id);
  ++stats.actions;
  try {
    switch (std::uniform_int_distribution<int>(0, 9)(rng)) {
      case 0: svc.sample(id); break;
      case 1:
      case 2: svc.judgment(id, std::uniform_int_distribution<int>(-1, 2)(rng)); break;
      case 3:
      case 4:
      case 5: {
        const bool bad = std::uniform_int_distribution<int>(0, 9)(rng) == 0;
        svc.edit(id, random_mask(bad ? 32 : 64, 64, rng));
        break;
      }
      case 6:
      case 7: svc.finish_edit(id); break;
      default: svc.next(id); break;
    }
    ++stats.accepted;
    return true;
  } catch (const StateError&) {
  } catch (const ValueError&) {
  } catch (const ShapeError&) {
  }
  ++stats.rejected;
  if (!(svc.session(id) == before)) throw std::logic_error("rejected action mutated session " + id);
  return false;
}

// Every stored result recomputes identically from its stored mask.
inline std::size_t recompute_mismatches(const tutor::TutorSession& s, const tutor::Teacher& t,
                                        std::size_t* checked = nullptr) {
  std::size_t bad = 0, n = 0;
  auto check = [&](const std::string& sample_id, const tutor::EditRecord& e) {
    const auto edit = guided::make_edit(sample_id, e.mask, t.model().arch());
    ++n;
    if (!(guided::guided_forward(t.model(), t.sample(sample_id).image, edit) == e.result)) ++bad;
  };
  for (const auto& o : s.outcomes)
    for (const auto& e : o.edits) check(o.sample_id, e);
  if (s.state == tutor::State::kEditLoop)
    for (const auto& e : s.edits) check(s.current_sample_id, e);
  if (checked) *checked += n;
  return bad;
}

inline std::size_t illegal_transitions(const tutor::TutorSession& s) {
  std::size_t bad = 0;
  std::optional<tutor::State> prev;
  for (std::size_t i = 0; i < s.transitions.size(); ++i) {
    const auto& t = s.transitions[i];
    if (i == 0 ? t.from.has_value() : t.from != prev) ++bad;
    if (!legal_oracle(t.from, t.to)) ++bad;
    prev = t.to;
  }
  if (!s.transitions.empty() && s.transitions.back().to != s.state) ++bad;
  return bad;
}

}  // namespace abn::test
