#include "abn/tutor/api.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <httplib.h>

#include "abn/data/pgm.hpp"

namespace abn::tutor {
namespace {

using nlohmann::json;

json with_version(json body) {
  body["schema_version"] = kApiSchemaVersion;
  return body;
}

ApiResponse ok(json body) { return {200, with_version(std::move(body))}; }

ApiResponse fail(int status, const std::string& kind, const std::string& message) {
  return {status, with_version({{"error", {{"kind", kind}, {"message", message}}}})};
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path) {
    if (c == '?') break;
    if (c == '/') {
      if (!cur.empty()) parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) parts.push_back(std::move(cur));
  return parts;
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  json j = json::parse(body);  // json::parse_error -> 400
  if (!j.is_object()) throw ValueError("request body must be a JSON object");
  return j;
}

int label_field(const json& j) {
  if (!j.contains("label") || !j.at("label").is_number_integer()) {
    throw ValueError("body needs an integer 'label'");
  }
  return j.at("label").get<int>();
}

std::optional<std::uint64_t> seed_field(const json& j) {
  if (!j.contains("seed") || j.at("seed").is_null()) return std::nullopt;
  if (!j.at("seed").is_number_unsigned()) throw ValueError("'seed' must be a non-negative integer");
  return j.at("seed").get<std::uint64_t>();
}

std::string string_field(const json& j, const char* name) {
  if (!j.contains(name) || !j.at(name).is_string()) {
    throw ValueError(std::string("body needs a string '") + name + "'");
  }
  return j.at(name).get<std::string>();
}

json sample_json(const SampleView& v) {
  if (v.state == State::kFinished || !v.image) {
    return {{"finished", true}, {"state", state_name(v.state)}};
  }
  return {{"finished", false},
          {"sample_id", v.sample_id},
          {"image", encode_image(*v.image)},
          {"image_format", "pgm-base64"},
          {"state", state_name(v.state)}};
}

json tensor_2d(const nn::Tensor<float>& t) {
  json rows = json::array();
  for (std::size_t r = 0; r < t.dim(0); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < t.dim(1); ++c) row.push_back(t.at(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json reveal_json(const RevealPayload& p, State state) {
  return {{"sample_id", p.sample_id},
          {"correct_label", p.correct_label},
          {"model_map", tensor_2d(p.model_map)},
          {"learner_mask", p.learner_mask ? mask_to_json(*p.learner_mask) : json(nullptr)},
          {"expert_mask", p.expert_mask ? mask_to_json(*p.expert_mask) : json(nullptr)},
          {"state", state_name(state)}};
}

json quiz_json(const QuizRecord& q) {
  json j = {{"quiz_id", q.quiz_id},
            {"learner_id", q.learner_id},
            {"phase", phase_name(q.phase)},
            {"total", q.sample_ids.size()},
            {"answered", q.answers.size()},
            {"complete", q.complete()}};
  if (q.complete()) {
    j["correct"] = q.correct;
    j["accuracy"] = q.accuracy();
  }
  return j;
}

ApiResponse route(TutorService& svc, const std::string& method,
                  const std::vector<std::string>& p, const std::string& body) {
  const bool get = method == "GET";
  const bool post = method == "POST";
  const auto n = p.size();

  if (n >= 1 && p[0] == "sessions") {
    if (n == 1 && post) {
      const json j = parse_body(body);
      const auto id = svc.create_session(string_field(j, "learner_id"), seed_field(j));
      return ok({{"session_id", id}, {"sample", sample_json(svc.sample(id))}});
    }
    if (n == 2 && get) return ok(to_json(svc.session(p[1])));
    if (n == 3) {
      const auto& id = p[1];
      const auto& action = p[2];
      if (get && action == "sample") return ok(sample_json(svc.sample(id)));
      if (post && action == "judgment") {
        const auto fb = svc.judgment(id, label_field(parse_body(body)));
        json out = {{"correct", fb.correct}, {"state", state_name(svc.session(id).state)}};
        if (fb.correct_label) out["correct_label"] = *fb.correct_label;
        return ok(out);
      }
      if (post && action == "edit") {
        const json j = parse_body(body);
        if (!j.contains("mask")) throw ValueError("body needs a 'mask' 2-D array");
        const auto r = svc.edit(id, mask_from_json(j.at("mask")));
        json pct = json::array();
        for (double v : r.result.probabilities) pct.push_back(guided::ScoreTrace::percent(v));
        return ok({{"probabilities", r.result.probabilities},
                   {"scores_percent", pct},
                   {"predicted_class", r.result.predicted_class},
                   {"history_index", r.history_index},
                   {"hint", r.hint}});
      }
      if (post && (action == "finish-edit" || action == "reveal")) {
        const auto payload = svc.finish_edit(id);
        return ok(reveal_json(payload, svc.session(id).state));
      }
      if (post && action == "next") return ok(sample_json(svc.next(id)));
    }
  }

  if (n >= 1 && p[0] == "quizzes") {
    if (n == 1 && post) {
      const json j = parse_body(body);
      const auto id = svc.create_quiz(string_field(j, "learner_id"),
                                      parse_phase(string_field(j, "phase")), seed_field(j));
      return ok({{"quiz_id", id}, {"total", svc.quiz(id).sample_ids.size()}});
    }
    if (n == 2 && get) return ok(quiz_json(svc.quiz(p[1])));
    if (n == 3 && get && p[2] == "sample") {
      const auto q = svc.quiz(p[1]);
      json out = sample_json(svc.quiz_sample(p[1]));
      out.erase("state");
      out["index"] = q.answers.size();
      out["total"] = q.sample_ids.size();
      return ok(out);
    }
    if (n == 3 && post && p[2] == "answer") {
      const auto remaining = svc.quiz_answer(p[1], label_field(parse_body(body)));
      return ok({{"remaining", remaining}});
    }
  }

  if (n == 2 && get && p[0] == "reports") return ok(to_json(svc.report(p[1])));

  return fail(404, "not_found", "no route for " + method + " /" + [&] {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += (i ? "/" : "") + p[i];
    return s;
  }());
}

}  // namespace

std::string encode_image(const nn::Tensor<float>& image) {
  if (image.rank() != 2) throw ShapeError("encode_image: expected H x W, got " +
                                          nn::shape_str(image.shape()));
  data::GrayImage8 g{image.dim(0), image.dim(1), {}};
  g.pixels.reserve(image.size());
  for (float v : image.data()) {
    const long q = std::lround(static_cast<double>(v) * 255.0);
    g.pixels.push_back(static_cast<std::uint8_t>(std::clamp(q, 0L, 255L)));
  }
  return httplib::detail::base64_encode(data::encode_pgm(g));
}

ApiResponse dispatch(TutorService& service, const std::string& method,
                     const std::string& path, const std::string& body) {
  try {
    return route(service, method, split_path(path), body);
  } catch (const nlohmann::json::exception& e) {
    return fail(400, "bad_request", e.what());
  } catch (const ShapeError& e) {
    return fail(400, "invalid_mask", e.what());
  } catch (const ValueError& e) {
    return fail(400, "bad_request", e.what());
  } catch (const NotFoundError& e) {
    return fail(404, "not_found", e.what());
  } catch (const StateError& e) {
    return fail(409, "state_violation", e.what());
  } catch (const ConflictError& e) {
    return fail(409, "conflict", e.what());
  } catch (const std::exception& e) {
    return fail(500, "internal", e.what());
  }
}

void mount(httplib::Server& server, TutorService& service) {
  auto handler = [&service](const httplib::Request& req, httplib::Response& res) {
    const auto r = dispatch(service, req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get(R"(/.*)", handler);
  server.Post(R"(/.*)", handler);
}

}  // namespace abn::tutor
