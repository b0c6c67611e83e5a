#include "aeckit/service.hpp"

#include <cstdio>

#include <httplib.h>
#include <json.hpp>

#include "aeckit/audio.hpp"
#include "aeckit/base64.hpp"
#include "aeckit/error.hpp"

namespace aeckit {
namespace {

using nlohmann::json;

HttpResponse error_response(int status, const std::string& code, const std::string& message) {
  return {status, json{{"error", message}, {"code", code}}.dump()};
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::SampleRateMismatch: return 422;
    case ErrorCode::CorruptHeader:
    case ErrorCode::UnsupportedFormat:
    case ErrorCode::EmptyClip:
    case ErrorCode::InvalidArgument:
    case ErrorCode::ShapeMismatch:
      return 400;
    default: return 500;
  }
}

AudioClip decode_field(const json& doc, const char* key) {
  const auto it = doc.find(key);
  if (it == doc.end() || !it->is_string())
    throw Error(ErrorCode::InvalidArgument, std::string("missing string field '") + key + "'");
  const auto bytes = base64_decode(it->get_ref<const std::string&>());
  return decode_wav(bytes);
}

}  // namespace

ScoringRequest parse_score_body(std::string_view body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("body is not JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::InvalidArgument, "body must be a JSON object");
  ScoringRequest req;
  req.near_mic = decode_field(doc, "near_wav_b64");
  req.far_end = decode_field(doc, "far_wav_b64");
  req.enhanced = decode_field(doc, "enhanced_wav_b64");
  if (const auto it = doc.find("scenario"); it != doc.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(ErrorCode::InvalidArgument, "scenario must be a string");
    req.scenario = scenario_from_string(it->get<std::string>());
  }
  return req;
}

ScoringService::ScoringService(std::optional<Checkpoint> ckpt, std::size_t max_body)
    : ckpt_(std::move(ckpt)), max_body_(max_body) {
  if (ckpt_) {
    const auto bytes = serialize_checkpoint(*ckpt_);
    std::uint32_t crc = 0;
    for (std::size_t k = 0; k < 4; ++k) crc |= std::uint32_t{bytes[bytes.size() - 4 + k]} << (8 * k);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "crc32-%08x", crc);
    version_ = buf;
  }
}

HttpResponse ScoringService::handle_score(std::string_view body) const {
  if (body.size() > max_body_)
    return error_response(413, "PayloadTooLarge", "body exceeds " + std::to_string(max_body_) + " bytes");
  if (!ckpt_) return error_response(503, "NoCheckpoint", "service started without a checkpoint");
  try {
    const auto req = parse_score_body(body);
    const auto mos = score(*ckpt_, req);
    return {200, json{{"echo_mos", mos.echo_mos}, {"other_mos", mos.other_mos}, {"model_version", version_}}.dump()};
  } catch (const Error& e) {
    return error_response(status_for(e.code()), std::string(to_string(e.code())), e.what());
  } catch (const std::exception& e) {
    return error_response(500, "Internal", e.what());
  }
}

HttpResponse ScoringService::handle_health() const {
  return {200, json{{"status", "ok"}, {"checkpoint_loaded", checkpoint_loaded()}}.dump()};
}

struct HttpServer::Impl {
  const ScoringService& service;
  httplib::Server server;
  explicit Impl(const ScoringService& s) : service(s) {}
};

HttpServer::HttpServer(const ScoringService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  const ScoringService* svc = &service;
  srv.set_payload_max_length(service.max_body());
  const auto reply = [](httplib::Response& res, const HttpResponse& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  srv.Post("/score", [svc, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc->handle_score(req.body));
  });
  srv.Get("/health", [svc, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, svc->handle_health());
  });
  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      const std::string code = res.status == 413 ? "PayloadTooLarge" : "HttpError";
      res.set_content(json{{"error", "HTTP " + std::to_string(res.status)}, {"code", code}}.dump(),
                      "application/json");
    }
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  auto& srv = impl_->server;
  const int bound = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() {
  if (!impl_->server.listen_after_bind()) throw Error(ErrorCode::IoError, "server stopped with an error");
}

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace aeckit
