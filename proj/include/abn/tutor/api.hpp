#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "abn/tutor/service.hpp"

namespace httplib {
class Server;
}

namespace abn::tutor {

inline constexpr int kApiSchemaVersion = 1;

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

// Transport-independent router. Every response body carries
// "schema_version"; errors are {"error": {"kind", "message"}} with
//   400 bad request / invalid mask, 404 unknown id, 409 wrong state or
//   duplicate quiz phase, 500 otherwise.
//
//   POST /sessions                  {learner_id, seed?}  -> {session_id, sample}
//   GET  /sessions/{id}/sample                           -> sample view
//   POST /sessions/{id}/judgment    {label}              -> {correct, correct_label?, state}
//   POST /sessions/{id}/edit        {mask}               -> {probabilities, scores_percent,
//                                                           predicted_class, history_index, hint}
//   POST /sessions/{id}/finish-edit                      -> reveal payload
//   POST /sessions/{id}/next                             -> sample view or {finished: true}
//   GET  /sessions/{id}                                  -> full session record
//   POST /quizzes                   {learner_id, phase, seed?} -> {quiz_id, total}
//   GET  /quizzes/{id}/sample                            -> {sample_id, image, index, total}
//   POST /quizzes/{id}/answer       {label}              -> {remaining}
//   GET  /quizzes/{id}                                   -> progress; score once complete
//   GET  /reports/{learner_id}                           -> learner report
//
// Images are base64 8-bit PGM, masks 2-D arrays of 0/1.
ApiResponse dispatch(TutorService& service, const std::string& method,
                     const std::string& path, const std::string& body);

// Routes every request on `server` through dispatch().
void mount(httplib::Server& server, TutorService& service);

std::string encode_image(const nn::Tensor<float>& image);  // base64 PGM

}  // namespace abn::tutor
