#pragma once

// HTTP/JSON front end for Service. Errors are {"code", "detail"}.

#include "andis/service.hpp"

#include <httplib.h>

namespace andis {

inline int http_status(const std::string& code) {
  static const std::map<std::string, int> table{
      {"not_found", 404},          {"bad_request", 400},       {"parse_error", 400},
      {"duplicate_doc", 400},      {"partition_violation", 400}, {"invalid_argument", 400},
      {"forbidden_op", 403},       {"unknown_annotator", 403}, {"already_exists", 409},
      {"invalid_op", 409},         {"invalid_submission", 409}, {"wrong_stage", 409},
      {"missing_submissions", 409}, {"invalid_stage", 409},    {"not_precomputed", 409},
      {"too_large", 413}};
  auto it = table.find(code);
  return it == table.end() ? 500 : it->second;
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = s.find(',', start);
    auto part = s.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (!part.empty()) out.push_back(part);
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

inline nlohmann::json parse_body(const httplib::Request& req) {
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error("bad_request", "body must be a JSON object");
  return j;
}

inline void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace detail

// Registers every route on `server`; the service must outlive it.
inline void install_routes(httplib::Server& server, Service& svc) {
  using Handler = std::function<nlohmann::json(const httplib::Request&, const std::string&)>;
  auto wrap = [](Handler h) {
    return [h](const httplib::Request& req, httplib::Response& res) {
      try {
        detail::reply(res, 200, h(req, req.matches[1].str()));
      } catch (const Error& e) {
        detail::reply(res, http_status(e.code()), {{"code", e.code()}, {"detail", e.what()}});
      } catch (const nlohmann::json::exception& e) {
        detail::reply(res, 400, {{"code", "bad_request"}, {"detail", e.what()}});
      } catch (const std::exception& e) {
        detail::reply(res, 500, {{"code", "internal"}, {"detail", e.what()}});
      }
    };
  };

  server.Post(R"(/names/([^/]+)/ingest)", wrap([&svc](const httplib::Request& req, const std::string& name) {
                std::optional<int> k;
                if (req.has_param("k")) {
                  const auto text = req.get_param_value("k");
                  char* end = nullptr;
                  const long v = std::strtol(text.c_str(), &end, 10);
                  if (text.empty() || *end != '\0' || v < 1 || v > 1000) throw Error("bad_request", "bad k: " + text);
                  k = static_cast<int>(v);
                }
                return svc.ingest(name, req.body, k, detail::split_csv(req.get_param_value("roster")));
              }));

  server.Post(R"(/names/([^/]+)/precompute)", wrap([&svc](const httplib::Request& req, const std::string& name) {
                return svc.precompute(name, req.has_param("strategy") ? req.get_param_value("strategy") : "baseline");
              }));

  server.Get(R"(/names/([^/]+)/view)", wrap([&svc](const httplib::Request& req, const std::string& name) {
               ViewRequest v;
               v.annotator = req.get_param_value("annotator");
               v.parents = detail::split_csv(req.get_param_value("parents"));
               for (const auto& a : detail::split_csv(req.get_param_value("attrs"))) v.attrs.push_back(parse_attribute(a));
               return svc.state_view(name, v);
             }));

  server.Post(R"(/names/([^/]+)/ops)", wrap([&svc](const httplib::Request& req, const std::string& name) {
                const auto body = detail::parse_body(req);
                if (!body.contains("annotator") || !body.contains("operation"))
                  throw Error("bad_request", "expected {\"annotator\", \"operation\"}");
                return svc.submit_op(name, body.at("annotator").get<std::string>(),
                                     operation_from_json(body.at("operation")));
              }));

  server.Post(R"(/names/([^/]+)/submissions)", wrap([&svc](const httplib::Request& req, const std::string& name) {
                const auto body = detail::parse_body(req);
                if (!body.contains("annotator")) throw Error("bad_request", "annotator is required");
                std::optional<Submission> sub;
                if (body.contains("submission")) sub = submission_from_json(body.at("submission"));
                return svc.submit(name, body.at("annotator").get<std::string>(), sub);
              }));

  server.Post(R"(/names/([^/]+)/advance)",
              wrap([&svc](const httplib::Request&, const std::string& name) { return svc.advance(name); }));

  server.Get(R"(/names/([^/]+)/export)",
             wrap([&svc](const httplib::Request&, const std::string& name) { return svc.export_assignment(name); }));
}

}  // namespace andis
