#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "abn/data/synthetic.hpp"
#include "abn/embed/knowledge.hpp"
#include "abn/guided/guided.hpp"

using namespace abn;
using data::BinaryMask;

namespace {

const std::vector<data::LabeledSample>& small_corpus() {
  static const auto samples = data::generate_synthetic(11, 6, 6, {64, "e", data::Split::kTrain});
  return samples;
}

const data::LabeledSample& first_diseased() {
  for (const auto& s : small_corpus())
    if (s.label == 1) return s;
  throw std::logic_error("no diseased sample");
}

BinaryMask random_mask(std::size_t n, std::uint64_t seed, double p = 0.3) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b(p);
  BinaryMask m(n, n);
  for (auto& v : m.bits) v = b(rng);
  return m;
}

}  // namespace

TEST_SUITE("expert maps") {
  TEST_CASE("target is the area average at map resolution") {
    const auto& s = first_diseased();
    auto em = embed::make_expert_map(s.id, *s.expert_mask, 8);
    CHECK(em.map_target.shape() == nn::Shape{8, 8});
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t c = 0; c < 8; ++c) {
        double cover = 0;
        for (std::size_t y = 0; y < 8; ++y)
          for (std::size_t x = 0; x < 8; ++x) cover += s.expert_mask->at(r * 8 + y, c * 8 + x);
        CHECK(em.map_target.at(r, c) == doctest::Approx(cover / 64.0));
      }
  }

  TEST_CASE("only samples with a lesion get a map") {
    auto maps = embed::expert_maps_from(small_corpus(), model::ArchConfig{});
    CHECK(maps.size() == 6);
    for (const auto& m : maps) {
      for (float v : m.map_target.data()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
    }
  }
}

TEST_SUITE("embedding loss") {
  TEST_CASE("L_m is non-negative, zero exactly on equal maps, finite gradient there") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    nn::Tensor<double> a({8, 8}), b({8, 8});
    for (auto& v : a.data()) v = u(rng);
    for (auto& v : b.data()) v = u(rng);
    auto cst = [](const nn::Tensor<double>& t) { return nn::Var<double>::constant(t); };
    CHECK(embed::map_matching_loss(cst(a), cst(b)).value().item() > 0);
    auto m = nn::Var<double>::leaf(a, true);
    auto same = embed::map_matching_loss(cst(a), m);
    CHECK(same.value().item() == 0.0);
    nn::backward(same);
    if (m.has_grad())
      for (double g : m.grad().data()) CHECK(std::isfinite(g));
  }

  TEST_CASE("total loss is linear in lambda") {
    const double la = 0.3, lp = 0.6, lm = 1.7;
    for (double lambda : {0.0, 0.5, 1.0, 2.5}) {
      CHECK(embed::total_loss(la, lp, lm, lambda) ==
            doctest::Approx(embed::total_loss(la, lp, lm, 0.0) + lambda * lm));
    }
    CHECK_THROWS_AS(embed::total_loss(la, lp, lm, -1.0), ValueError);
    using V = nn::Var<double>;
    auto v = [](double x) { return V::constant(nn::Tensor<double>::scalar(x)); };
    CHECK(embed::total_loss(v(la), v(lp), v(lm), 2.0).value().item() ==
          doctest::Approx(la + lp + 2.0 * lm));
  }
}

TEST_SUITE("finetune") {
  TEST_CASE("extractor frozen, reports per epoch, deterministic") {
    model::AbnModel base(model::ArchConfig{}, 3);
    auto maps = embed::expert_maps_from(small_corpus(), base.arch());
    auto cfg = embed::default_finetune_config();
    cfg.epochs = 2;
    cfg.batch_size = 4;
    auto a = embed::finetune(base, small_corpus(), maps, cfg);
    auto b = embed::finetune(base, small_corpus(), maps, cfg);
    CHECK(embed::extractor_hash(a.model) == embed::extractor_hash(base));
    for (std::size_t i = 0; i < base.parameters().size(); ++i) {
      const auto& p = base.parameters()[i];
      if (model::AbnModel::is_extractor_param(p.name))
        CHECK(a.model.parameters()[i].var.value() == p.var.value());
      CHECK(a.model.parameters()[i].var.value() == b.model.parameters()[i].var.value());
    }
    CHECK_FALSE(a.model.parameters().back().var.value() == base.parameters().back().var.value());
    CHECK(a.report.epochs.size() == 2);
    CHECK(a.report.n_expert == 6);
    CHECK(a.model.parameters()[0].var.requires_grad());
  }

  TEST_CASE("dangling expert maps are rejected before any update") {
    model::AbnModel base;
    auto maps = embed::expert_maps_from(small_corpus(), base.arch());
    maps.push_back(embed::make_expert_map("ghost-1", BinaryMask(64, 64, 1), 8));
    maps.push_back(embed::make_expert_map("ghost-2", BinaryMask(64, 64, 1), 8));
    try {
      embed::finetune(base, small_corpus(), maps, embed::default_finetune_config());
      FAIL("expected ValueError");
    } catch (const ValueError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("ghost-1") != std::string::npos);
      CHECK(msg.find("ghost-2") != std::string::npos);
    }
  }

  TEST_CASE("zero epochs returns the model unchanged") {
    model::AbnModel base(model::ArchConfig{}, 4);
    auto cfg = embed::default_finetune_config();
    cfg.epochs = 0;
    auto r = embed::finetune(base, small_corpus(), {}, cfg);
    for (std::size_t i = 0; i < base.parameters().size(); ++i)
      CHECK(r.model.parameters()[i].var.value() == base.parameters()[i].var.value());
    CHECK(r.report.epochs.empty());
    CHECK(r.report.post_accuracy == r.report.pre_accuracy);
  }

  TEST_CASE("config errors") {
    model::AbnModel base;
    auto cfg = embed::default_finetune_config();
    cfg.lambda = -0.1;
    CHECK_THROWS_AS(embed::finetune(base, small_corpus(), {}, cfg), ValueError);
    cfg = embed::default_finetune_config();
    cfg.batch_size = 0;
    CHECK_THROWS_AS(embed::finetune(base, small_corpus(), {}, cfg), ValueError);
  }

  TEST_CASE("misidentified samples are exactly the perception errors") {
    model::AbnModel m(model::ArchConfig{}, 8);
    auto mis = embed::collect_misidentified(m, small_corpus());
    std::size_t expected = 0;
    for (const auto& s : small_corpus())
      expected += model::argmax(m.forward(s.image).perception_logits.value()) !=
                  static_cast<std::size_t>(s.label);
    CHECK(mis.size() == expected);
    for (const auto& x : mis) CHECK(x.predicted != static_cast<std::size_t>(x.label));
  }
}

TEST_SUITE("guided inference") {
  TEST_CASE("resample tie rule") {
    BinaryMask m(2, 4);
    m.at(0, 0) = m.at(1, 0) = 1;  // left cell: exactly half covered
    m.at(0, 2) = 1;               // right cell: a quarter
    auto r = guided::resample_edit(m, 1, 2);
    CHECK(r.bits == std::vector<std::uint8_t>{1, 0});
    BinaryMask bad(2, 4);
    bad.bits[0] = 2;
    CHECK_THROWS_AS(guided::resample_edit(bad, 1, 2), ValueError);
  }

  TEST_CASE("edit validation") {
    model::ArchConfig arch;
    CHECK_THROWS_AS(guided::make_edit("x", BinaryMask(32, 32), arch), ShapeError);
    auto e = guided::make_edit("x", random_mask(64, 1), arch);
    CHECK(e.map.height == 8);
    CHECK(e.map == guided::resample_edit(e.mask_image, 8, 8));
  }

  TEST_CASE("zero mask equals the raw-feature read-out exactly") {
    model::AbnModel m(model::ArchConfig{}, 12);
    for (const auto& s : small_corpus()) {
      auto g = guided::guided_forward(m, s.image, guided::make_edit(s.id, BinaryMask(64, 64), m.arch()));
      auto u = guided::unguided_forward(m, s.image);
      CHECK(g.probabilities == u.probabilities);
      CHECK(g.predicted_class == u.predicted_class);
    }
  }

  TEST_CASE("probabilities, argmax, binarity, determinism") {
    model::AbnModel m(model::ArchConfig{}, 13);
    const auto& s = first_diseased();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto edit = guided::make_edit(s.id, random_mask(64, seed, 0.1 * double(seed)), m.arch());
      auto r = guided::guided_forward(m, s.image, edit);
      CHECK(std::abs(std::accumulate(r.probabilities.begin(), r.probabilities.end(), 0.0) - 1.0) <
            1e-9);
      CHECK(r.predicted_class ==
            static_cast<std::size_t>(std::max_element(r.probabilities.begin(), r.probabilities.end()) -
                                     r.probabilities.begin()));
      CHECK(r.map_used == edit.map);
      for (auto b : r.map_used.bits) CHECK(b <= 1);
      CHECK(guided::guided_forward(m, s.image, edit) == r);
    }
  }

  TEST_CASE("ties in probabilities go to the lower class") {
    auto r = guided::result_from_logits(nn::Tensor<float>({2}, 0.7f), BinaryMask(1, 1));
    CHECK(r.predicted_class == 0);
    CHECK(r.probabilities[0] == r.probabilities[1]);
  }

  TEST_CASE("binary map amplifies features within [g, 2g]") {
    model::AbnModel m(model::ArchConfig{}, 14);
    const auto& s = first_diseased();
    auto g = m.extract(s.image);
    auto edit = guided::make_edit(s.id, random_mask(64, 99, 0.5), m.arch());
    nn::Tensor<float> map({8, 8});
    for (std::size_t i = 0; i < 64; ++i) map[i] = edit.map.bits[i];
    auto w = nn::scale_by_map(g, nn::Var<float>::constant(map));
    for (std::size_t i = 0; i < g.value().size(); ++i) {
      const float gi = g.value()[i];
      CHECK(gi >= 0.0f);
      CHECK(w.value()[i] >= gi);
      CHECK(w.value()[i] <= 2.0f * gi);
      CHECK(w.value()[i] == (map[i % 64] ? 2.0f * gi : gi));
    }
  }

  TEST_CASE("score trace follows submission order") {
    model::AbnModel m(model::ArchConfig{}, 15);
    const auto& s = first_diseased();
    std::vector<guided::GuidedResult> hist;
    for (std::uint64_t seed = 0; seed < 4; ++seed)
      hist.push_back(guided::guided_forward(m, s.image, guided::make_edit(s.id, random_mask(64, seed), m.arch())));
    auto trace = guided::score_trace(hist);
    REQUIRE(trace.size() == 4);
    REQUIRE(trace.per_class.size() == 2);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(trace.entries[i].index == i);
      CHECK(trace.per_class[1][i] == hist[i].probabilities[1]);
    }
    CHECK(guided::ScoreTrace::percent(0.25) == 25.0);
    CHECK(guided::score_trace({}).size() == 0);
  }
}
