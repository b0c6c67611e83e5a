#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "aeckit/model.hpp"
#include "aeckit/pipeline.hpp"

namespace aeckit {

inline constexpr std::size_t kMaxRequestBody = 64u << 20;

struct HttpResponse {
  int status = 200;
  std::string body;  // JSON
};

// Stateless scoring handlers. The checkpoint is immutable after construction
// and shared by concurrent requests.
class ScoringService {
 public:
  explicit ScoringService(std::optional<Checkpoint> ckpt, std::size_t max_body = kMaxRequestBody);

  // Body: {"near_wav_b64", "far_wav_b64", "enhanced_wav_b64", optional "scenario"}.
  // 200 {"echo_mos","other_mos","model_version"}; errors carry {"error","code"}:
  // 400 malformed, 413 oversize, 422 sample-rate mismatch, 503 no checkpoint, 500 otherwise.
  HttpResponse handle_score(std::string_view body) const;
  // 200 {"status":"ok","checkpoint_loaded":bool}
  HttpResponse handle_health() const;

  bool checkpoint_loaded() const { return ckpt_.has_value(); }
  // "crc32-xxxxxxxx" of the serialised checkpoint; empty without one.
  const std::string& model_version() const { return version_; }
  std::size_t max_body() const { return max_body_; }

 private:
  std::optional<Checkpoint> ckpt_;
  std::size_t max_body_;
  std::string version_;
};

// Parses the JSON request body into a ScoringRequest. Throws Error.
ScoringRequest parse_score_body(std::string_view body);

// POST /score and GET /health over HTTP/1.1.
class HttpServer {
 public:
  explicit HttpServer(const ScoringService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // port 0 picks a free port. Returns the bound port. Throws IoError.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace aeckit
