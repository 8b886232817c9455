#pragma once

// Paragraph refinement through an OpenAI-compatible chat-completion endpoint.
// Any transport, HTTP or payload failure degrades to the rule-based refiner
// (or passthrough when the mentions carry no figure reference); callers never
// see an exception from refine().

#include <chrono>
#include <cstddef>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "figcap/pipeline.hpp"

namespace figcap {

inline constexpr std::string_view kRefinementPrompt =
    "The content I provide includes two sections, namely ‘paragraph’ and "
    "‘mention’. ‘Paragraph’ and ‘mention’ are data related to "
    "figures or tables in a paper. According to the most mentioned figure in the "
    "‘mention’ section, provide detailed information about this figure from the "
    "‘paragraph’ section!";

struct RefinerEndpoint {
  std::string base_url;  // e.g. http://127.0.0.1:8000/v1
  std::string auth_token;
  std::string model = "llama-2-7b-chat";
  double timeout_seconds = 30.0;
  std::size_t max_in_flight = 4;
};

inline std::string build_refinement_prompt(std::string_view paragraph,
                                           const std::vector<std::string>& mentions) {
  std::string prompt(kRefinementPrompt);
  prompt += "\n\nparagraph:\n";
  prompt += paragraph;
  prompt += "\n\nmention:\n";
  for (std::size_t i = 0; i < mentions.size(); ++i) {
    if (i) prompt += '\n';
    prompt += mentions[i];
  }
  return prompt;
}

inline nlohmann::json build_chat_request(const RefinerEndpoint& endpoint, std::string_view paragraph,
                                         const std::vector<std::string>& mentions) {
  return nlohmann::json{
      {"model", endpoint.model},
      {"temperature", 0},
      {"messages",
       nlohmann::json::array({{{"role", "user"},
                               {"content", build_refinement_prompt(paragraph, mentions)}}})}};
}

// Text of choices[0].message.content, or nullopt when absent or empty.
inline std::optional<std::string> extract_chat_content(const nlohmann::json& body) {
  if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array() ||
      body["choices"].empty()) {
    return std::nullopt;
  }
  const auto& choice = body["choices"][0];
  if (!choice.is_object() || !choice.contains("message")) return std::nullopt;
  const auto& message = choice["message"];
  if (!message.is_object() || !message.contains("content") || !message["content"].is_string()) {
    return std::nullopt;
  }
  auto text = message["content"].get<std::string>();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return std::nullopt;
  text = text.substr(first, text.find_last_not_of(" \t\r\n") - first + 1);
  return text;
}

class ExternalRefiner {
 public:
  using LogSink = std::function<void(const std::string&)>;

  explicit ExternalRefiner(RefinerEndpoint endpoint, std::size_t budget_chars,
                           LogSink log = default_log(), std::ostream* response_log = nullptr)
      : endpoint_(std::move(endpoint)),
        budget_chars_(budget_chars),
        log_(std::move(log)),
        response_log_(response_log) {
    if (budget_chars_ == 0) throw InvalidArgument("refiner budget must be > 0");
    split_base_url();
  }

  const RefinerEndpoint& endpoint() const noexcept { return endpoint_; }

  RefinementResult refine(const std::string& id, std::string_view paragraph,
                          const std::vector<std::string>& mentions) const {
    const auto target = try_most_mentioned_figure(mentions);
    std::string cause;
    if (auto text = request(id, paragraph, mentions, cause)) {
      RefinementResult r;
      r.target = target;
      r.provenance = Provenance::external_llm;
      r.refined_paragraph = fit_to_budget(*text, budget_chars_);
      r.char_count = utf8_length(r.refined_paragraph);
      return r;
    }
    if (log_) log_("refine " + id + ": external refiner failed (" + cause + "), using fallback");
    if (!target) return refine_passthrough(paragraph);
    return refine_rule_based(paragraph, *target, budget_chars_);
  }

  static LogSink default_log() {
    return [](const std::string& line) {
      static std::mutex mu;
      std::lock_guard lock(mu);
      std::cerr << line << '\n';
    };
  }

 private:
  void split_base_url() {
    const auto& url = endpoint_.base_url;
    const auto scheme_end = url.find("://");
    const auto host_begin = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_begin = url.find('/', host_begin);
    origin_ = url.substr(0, path_begin);
    path_prefix_ = path_begin == std::string::npos ? "" : url.substr(path_begin);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  }

  std::optional<std::string> request(const std::string& id, std::string_view paragraph,
                                     const std::vector<std::string>& mentions,
                                     std::string& cause) const {
    if (origin_.empty()) {
      cause = "no endpoint configured";
      return std::nullopt;
    }
    const auto request_json = build_chat_request(endpoint_, paragraph, mentions);
    const auto body =
        request_json.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    nlohmann::json log_entry{{"id", id}, {"request", request_json}};
    std::optional<std::string> text;
    try {
      httplib::Client client(origin_);
      const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
          std::chrono::duration<double>(endpoint_.timeout_seconds));
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      httplib::Headers headers;
      if (!endpoint_.auth_token.empty()) {
        headers.emplace("Authorization", "Bearer " + endpoint_.auth_token);
      }
      auto res = client.Post(path_prefix_ + "/chat/completions", headers, body, "application/json");
      if (!res) {
        cause = "transport error: " + httplib::to_string(res.error());
      } else if (res->status != 200) {
        cause = "HTTP " + std::to_string(res->status);
        log_entry["status"] = res->status;
        log_entry["response"] = res->body;
      } else {
        log_entry["status"] = res->status;
        log_entry["response"] = res->body;
        const auto parsed = nlohmann::json::parse(res->body, nullptr, false);
        if (parsed.is_discarded()) {
          cause = "response is not JSON";
        } else if (!(text = extract_chat_content(parsed))) {
          cause = "response has no message content";
        }
      }
    } catch (const std::exception& e) {
      cause = std::string("client error: ") + e.what();
      text.reset();
    }
    if (!text) log_entry["error"] = cause;
    if (response_log_) {
      std::lock_guard lock(log_mu_);
      jsonl::write_line(*response_log_, log_entry);
    }
    return text;
  }

  RefinerEndpoint endpoint_;
  std::size_t budget_chars_;
  LogSink log_;
  std::ostream* response_log_;
  std::string origin_;
  std::string path_prefix_;
  mutable std::mutex log_mu_;
};

inline RefinementResult refine_external(std::string_view paragraph,
                                        const std::vector<std::string>& mentions,
                                        const RefinerEndpoint& endpoint,
                                        std::size_t budget_chars = 1000) {
  return ExternalRefiner(endpoint, budget_chars).refine("-", paragraph, mentions);
}

}  // namespace figcap
