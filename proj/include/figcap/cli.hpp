#pragma once

// Command-line frontend: ingest, refine, score, fuse, rank, report.
//
// Settings resolve as flags > FIGCAP_* environment > --config JSON file >
// defaults. The effective settings are echoed to stderr when a command starts.
// Exit codes: 0 success, 1 I/O failure, 2 format or validation failure.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "figcap/errors.hpp"
#include "figcap/fusion.hpp"
#include "figcap/jsonl.hpp"
#include "figcap/metrics.hpp"
#include "figcap/parallel.hpp"
#include "figcap/pipeline.hpp"
#include "figcap/ranking.hpp"
#include "figcap/refiner.hpp"

namespace figcap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitFormat = 2;

struct Setting {
  const char* key;
  const char* flag;
  const char* env;
  nlohmann::json default_value;
  const char* help;
};

inline const std::vector<Setting>& settings_table() {
  static const std::vector<Setting> kSettings = {
      {"normalizer", "--normalizer", "FIGCAP_NORMALIZER", "length-ratio",
       "identity | length-ratio"},
      {"metric_n", "--metric-n", "FIGCAP_METRIC_N", 2, "ROUGE order used by fuse"},
      {"jobs", "--jobs", "FIGCAP_JOBS", 0, "worker threads (0 = available parallelism)"},
      {"lowercase", "--lowercase", "FIGCAP_LOWERCASE", true, "lowercase tokens"},
      {"keep_digits", "--keep-digits", "FIGCAP_KEEP_DIGITS", true, "keep digits in tokens"},
      {"alpha", "--alpha", "FIGCAP_ALPHA", 1.0, "length penalty exponent"},
      {"lambda", "--lambda", "FIGCAP_LAMBDA", 0.001, "margin unit"},
      {"gamma", "--gamma", "FIGCAP_GAMMA", 100.0, "contrastive loss weight"},
      {"merge_policy", "--merge-policy", "FIGCAP_MERGE_POLICY", "prefer-alt",
       "prefer-alt | prefer-official | union"},
      {"mode", "--mode", "FIGCAP_MODE", "rule", "refinement mode: rule | external"},
      {"budget_chars", "--budget-chars", "FIGCAP_BUDGET_CHARS", 1000,
       "refined paragraph budget (characters)"},
      {"budget_tokens", "--budget-tokens", "FIGCAP_BUDGET_TOKENS", 1024,
       "assembled input budget (tokens)"},
      {"refiner_url", "--refiner-url", "FIGCAP_REFINER_URL", "",
       "chat-completion base URL, e.g. http://localhost:8000/v1"},
      {"refiner_model", "--refiner-model", "FIGCAP_REFINER_MODEL", "llama-2-7b-chat",
       "model name sent to the refiner"},
      {"refiner_token_env", "--refiner-token-env", "FIGCAP_REFINER_TOKEN_ENV",
       "FIGCAP_REFINER_TOKEN", "environment variable holding the refiner auth token"},
      {"refiner_timeout", "--refiner-timeout", "FIGCAP_REFINER_TIMEOUT", 30.0,
       "per-request timeout (seconds)"},
      {"max_in_flight", "--max-in-flight", "FIGCAP_MAX_IN_FLIGHT", 4,
       "maximum concurrent refiner requests"},
      {"precision", "--precision", "FIGCAP_PRECISION", 3, "decimals in printed tables"},
  };
  return kSettings;
}

// Converts a textual value to the JSON type of `like`.
inline nlohmann::json coerce(const std::string& key, const std::string& text,
                             const nlohmann::json& like) {
  try {
    if (like.is_boolean()) {
      if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
      if (text == "false" || text == "0" || text == "no" || text == "off") return false;
      throw InvalidArgument("expected a boolean");
    }
    if (like.is_number_integer()) {
      std::size_t used = 0;
      const long long v = std::stoll(text, &used);
      if (used != text.size() || v < 0) throw InvalidArgument("expected a nonnegative integer");
      return v;
    }
    if (like.is_number()) {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw InvalidArgument("expected a number");
      return v;
    }
  } catch (const std::logic_error&) {
    throw InvalidArgument("invalid value '" + text + "' for " + key);
  }
  return text;
}

inline void check_type(const std::string& key, const nlohmann::json& value,
                       const nlohmann::json& like) {
  const bool ok = (like.is_boolean() && value.is_boolean()) ||
                  (like.is_number_integer() && value.is_number_integer() && value.get<long long>() >= 0) ||
                  (like.is_number_float() && value.is_number()) ||
                  (like.is_string() && value.is_string());
  if (!ok) throw InvalidArgument("config value for '" + key + "' has the wrong type");
}

struct RunConfig {
  std::string subcommand;
  std::vector<std::string> inputs;
  std::string output;
  std::string predictions;
  std::string references;
  std::string response_log;
  std::vector<std::string> labels;
  bool emit_input = false;
  nlohmann::json settings;  // resolved values keyed as in settings_table()

  std::size_t jobs() const {
    const auto j = settings.at("jobs").get<std::size_t>();
    return j == 0 ? default_jobs() : j;
  }
  Normalizer normalizer() const {
    return Normalizer::parse(settings.at("normalizer").get<std::string>());
  }
  std::size_t metric_n() const {
    const auto n = settings.at("metric_n").get<std::size_t>();
    if (n == 0) throw InvalidArgument("--metric-n must be >= 1");
    return n;
  }
  TokenizerConfig tokenizer() const {
    return {settings.at("lowercase").get<bool>(), settings.at("keep_digits").get<bool>()};
  }
  LossConfig loss() const {
    LossConfig c;
    c.alpha = settings.at("alpha").get<double>();
    c.lambda = settings.at("lambda").get<double>();
    c.gamma = settings.at("gamma").get<double>();
    c.norm = normalizer();
    c.validate();
    return c;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = settings;
    j["subcommand"] = subcommand;
    if (!inputs.empty()) j["inputs"] = inputs;
    if (!output.empty()) j["output"] = output;
    if (!predictions.empty()) j["predictions"] = predictions;
    if (!references.empty()) j["references"] = references;
    if (!response_log.empty()) j["response_log"] = response_log;
    if (!labels.empty()) j["labels"] = labels;
    return j;
  }
};

// Applies config file, then environment, then explicitly given flags.
inline nlohmann::json resolve_settings(const std::string& config_path,
                                       const std::map<std::string, std::string>& flags) {
  nlohmann::json settings = nlohmann::json::object();
  for (const auto& s : settings_table()) settings[s.key] = s.default_value;

  if (!config_path.empty()) {
    auto in = jsonl::open_input(config_path);
    nlohmann::json file;
    try {
      file = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError("config file '" + config_path + "': " + e.what());
    }
    if (!file.is_object()) throw FormatError("config file must hold a JSON object");
    for (const auto& [key, value] : file.items()) {
      if (!settings.contains(key)) throw FormatError("unknown config key '" + key + "'");
      check_type(key, value, settings[key]);
      settings[key] = value;
    }
  }
  for (const auto& s : settings_table()) {
    if (const char* env = std::getenv(s.env); env != nullptr && *env != '\0') {
      settings[s.key] = coerce(s.env, env, s.default_value);
    }
  }
  for (const auto& [key, text] : flags) {
    const auto& like = std::find_if(settings_table().begin(), settings_table().end(),
                                    [&](const Setting& s) { return key == s.key; })
                           ->default_value;
    settings[key] = coerce(key, text, like);
  }
  return settings;
}

// ---------------------------------------------------------------------------
// Subcommands. Each returns an exit code; exceptions map to codes in run().

inline std::string percent(std::size_t part, std::size_t whole) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", whole == 0 ? 0.0 : 100.0 * part / whole);
  return buf;
}

inline int cmd_ingest(const RunConfig& cfg, std::ostream& out) {
  auto in = jsonl::open_input(cfg.inputs.at(0));
  std::size_t records = 0, resolved = 0, with_alt = 0, with_caption = 0;
  for_each_record(in, [&](const FigureRecord& rec, std::size_t) {
    ++records;
    if (try_most_mentioned_figure(rec.mentions)) ++resolved;
    if (rec.ocr_alt && !rec.ocr_alt->empty()) ++with_alt;
    if (rec.caption) ++with_caption;
  });
  out << "records: " << records << '\n'
      << "captions: " << with_caption << '\n'
      << "mention coverage: " << percent(resolved, records) << " (" << resolved << '/' << records
      << ")\n"
      << "ocr_alt coverage: " << percent(with_alt, records) << " (" << with_alt << '/' << records
      << ")\n";
  return kExitOk;
}

inline int cmd_refine(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  std::vector<FigureRecord> records;
  {
    auto in = jsonl::open_input(cfg.inputs.at(0));
    records = parse_corpus(in);
  }
  const auto& s = cfg.settings;
  const auto mode = s.at("mode").get<std::string>();
  if (mode != "rule" && mode != "external") {
    throw InvalidArgument("--mode must be rule or external");
  }
  const auto budget_chars = s.at("budget_chars").get<std::size_t>();
  const auto budget_tokens = s.at("budget_tokens").get<std::size_t>();
  if (budget_chars == 0 || budget_tokens == 0) throw InvalidArgument("budgets must be > 0");
  const auto policy = parse_merge_policy(s.at("merge_policy").get<std::string>());
  const auto tokenizer = cfg.tokenizer();

  std::unique_ptr<std::ofstream> response_log;
  if (!cfg.response_log.empty()) {
    response_log = std::make_unique<std::ofstream>(jsonl::open_output(cfg.response_log));
  }
  std::unique_ptr<ExternalRefiner> refiner;
  std::size_t jobs = cfg.jobs();
  if (mode == "external") {
    RefinerEndpoint endpoint;
    endpoint.base_url = s.at("refiner_url").get<std::string>();
    endpoint.model = s.at("refiner_model").get<std::string>();
    endpoint.timeout_seconds = s.at("refiner_timeout").get<double>();
    endpoint.max_in_flight = std::max<std::size_t>(1, s.at("max_in_flight").get<std::size_t>());
    if (const char* token = std::getenv(s.at("refiner_token_env").get<std::string>().c_str())) {
      endpoint.auth_token = token;
    }
    jobs = std::min(jobs, endpoint.max_in_flight);
    refiner = std::make_unique<ExternalRefiner>(
        endpoint, budget_chars,
        [&err](const std::string& line) {
          static std::mutex mu;
          std::lock_guard lock(mu);
          err << line << '\n';
        },
        response_log.get());
  }

  const auto results = ordered_map(records.size(), jobs, [&](std::size_t i) {
    const auto& rec = records[i];
    if (refiner) return refiner->refine(rec.id, rec.paragraph, rec.mentions);
    const auto target = try_most_mentioned_figure(rec.mentions);
    if (!target) return refine_passthrough(rec.paragraph);
    return refine_rule_based(rec.paragraph, *target, budget_chars);
  });

  auto file = jsonl::open_output(cfg.output);
  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto row = refinement_json(records[i].id, results[i]);
    if (cfg.emit_input) {
      const auto assembled = assemble_input(records[i], results[i], budget_tokens, policy, tokenizer);
      row["input"] = assembled.text;
      row["input_truncated"] = assembled.truncated;
    }
    jsonl::write_line(file, row);
    ++counts[provenance_name(results[i].provenance)];
  }
  if (!file) throw IoError("write to '" + cfg.output + "' failed");

  out << "records: " << records.size() << '\n';
  for (const auto& name : {"external-llm", "rule-based", "passthrough"}) {
    out << name << ": " << counts[name] << '\n';
  }
  return kExitOk;
}

inline int cmd_score(const RunConfig& cfg, std::ostream& out) {
  std::vector<CaptionRow> predictions, references;
  {
    auto in = jsonl::open_input(cfg.predictions);
    predictions = read_caption_stream(in);
  }
  {
    auto in = jsonl::open_input(cfg.references);
    references = read_caption_stream(in);
  }
  std::unordered_map<std::string, const std::string*> predicted;
  for (const auto& row : predictions) predicted.emplace(row.id, &row.caption);
  std::set<std::string> reference_ids;
  const auto tokenizer = cfg.tokenizer();
  std::vector<CandidateReferencePair> pairs;
  pairs.reserve(references.size());
  for (const auto& ref : references) {
    reference_ids.insert(ref.id);
    auto it = predicted.find(ref.id);
    if (it == predicted.end()) {
      throw AlignmentError("id '" + ref.id + "' has no prediction", ref.id);
    }
    pairs.emplace_back(tokenize(*it->second, tokenizer), tokenize(ref.caption, tokenizer));
  }
  for (const auto& row : predictions) {
    if (!reference_ids.contains(row.id)) {
      throw AlignmentError("id '" + row.id + "' has no reference", row.id);
    }
  }

  const auto report = evaluate_corpus(pairs, cfg.normalizer(), cfg.jobs());
  const std::string label = cfg.labels.empty() ? "run" : cfg.labels.front();
  nlohmann::json j = report;
  j["label"] = label;
  j["count"] = pairs.size();
  j["normalizer"] = cfg.normalizer().name();
  j["bleu"] = "sentence-level BLEU-4, add-one smoothing for n>=2, averaged over pairs";
  j["config"] = cfg.to_json();

  out << format_table({{label, report}}, cfg.settings.at("precision").get<int>());
  out << j.dump() << '\n';
  if (!cfg.output.empty()) {
    auto file = jsonl::open_output(cfg.output);
    file << j.dump(2) << '\n';
    if (!file) throw IoError("write to '" + cfg.output + "' failed");
  }
  return kExitOk;
}

inline int cmd_fuse(const RunConfig& cfg, std::ostream& out) {
  std::vector<NamedCaptionStream> streams;
  std::map<std::string, int> seen;
  for (const auto& path : cfg.inputs) {
    auto in = jsonl::open_input(path);
    std::string name = path;
    if (const int k = seen[path]++; k > 0) name += "#" + std::to_string(k + 1);
    try {
      streams.push_back({name, read_caption_stream(in)});
    } catch (const FormatError& e) {
      throw FormatError(path + ": " + e.what());
    }
  }
  FusionOptions options;
  options.n = cfg.metric_n();
  options.norm = cfg.normalizer();
  options.tokenizer = cfg.tokenizer();
  const auto rows = fuse_corpus(streams, options, cfg.jobs());

  auto file = jsonl::open_output(cfg.output);
  std::vector<std::size_t> wins(streams.size(), 0);
  for (const auto& row : rows) {
    jsonl::write_line(file, fused_row_json(row));
    ++wins[row.result.chosen_index];
  }
  if (!file) throw IoError("write to '" + cfg.output + "' failed");
  out << "ids: " << rows.size() << '\n';
  for (std::size_t s = 0; s < streams.size(); ++s) {
    out << "chosen from " << streams[s].model << ": " << wins[s] << '\n';
  }
  return kExitOk;
}

inline int cmd_rank(const RunConfig& cfg, std::ostream& out) {
  const auto loss_config = cfg.loss();
  const auto tokenizer = cfg.tokenizer();
  std::vector<CandidateSetRecord> sets;
  {
    auto in = jsonl::open_input(cfg.inputs.at(0));
    std::set<std::string> ids;
    jsonl::for_each_line(in, [&](const nlohmann::json& j, std::size_t) {
      auto rec = parse_candidate_set(j, tokenizer);
      if (!ids.insert(rec.id).second) throw CorpusError("duplicate id '" + rec.id + "'");
      sets.push_back(std::move(rec));
    });
  }
  const auto losses = ordered_map(sets.size(), cfg.jobs(), [&](std::size_t i) {
    return multitask_loss(sets[i].set, sets[i].reference_logprobs, loss_config);
  });

  auto file = jsonl::open_output(cfg.output);
  double mul = 0.0, xent = 0.0, ctr = 0.0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    jsonl::write_line(file, loss_row_json(sets[i].id, losses[i]));
    mul += losses[i].l_mul;
    xent += losses[i].l_xent;
    ctr += losses[i].l_ctr;
  }
  if (!file) throw IoError("write to '" + cfg.output + "' failed");
  const double count = sets.empty() ? 1.0 : static_cast<double>(sets.size());
  out << nlohmann::json{{"count", sets.size()},
                        {"mean_l_mul", mul / count},
                        {"mean_l_xent", xent / count},
                        {"mean_l_ctr", ctr / count}}
             .dump()
      << '\n';
  return kExitOk;
}

inline int cmd_report(const RunConfig& cfg, std::ostream& out) {
  std::vector<LabeledReport> rows;
  for (std::size_t i = 0; i < cfg.inputs.size(); ++i) {
    const auto& path = cfg.inputs[i];
    auto in = jsonl::open_input(path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(path + ": " + e.what());
    }
    LabeledReport row;
    try {
      row.report = j.get<MetricReport>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ": not a score report (" + e.what() + ")");
    }
    if (i < cfg.labels.size()) {
      row.label = cfg.labels[i];
    } else if (j.contains("label") && j["label"].is_string()) {
      row.label = j["label"].get<std::string>();
    } else {
      row.label = std::filesystem::path(path).stem().string();
    }
    rows.push_back(std::move(row));
  }
  out << format_table(rows, cfg.settings.at("precision").get<int>());
  return kExitOk;
}

// ---------------------------------------------------------------------------

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"figcap: caption metrics, ranking losses, consensus fusion and input pipeline", "figcap"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "JSON settings file");
  std::map<std::string, std::string> flag_text;
  std::vector<std::pair<std::string, CLI::Option*>> flag_options;
  for (const auto& s : settings_table()) {
    auto* opt = app.add_option(s.flag, flag_text[s.key], s.help);
    flag_options.emplace_back(s.key, opt);
  }

  RunConfig cfg;
  std::string label;

  auto* ingest = app.add_subcommand("ingest", "validate a corpus and print coverage statistics");
  ingest->add_option("corpus", cfg.inputs, "corpus JSON Lines file")->required()->expected(1);

  auto* refine = app.add_subcommand("refine", "refine paragraphs to the most-mentioned figure");
  refine->add_option("corpus", cfg.inputs, "corpus JSON Lines file")->required()->expected(1);
  refine->add_option("-o,--output", cfg.output, "refinement JSON Lines output")->required();
  refine->add_option("--response-log", cfg.response_log, "log refiner requests and responses");
  refine->add_flag("--emit-input", cfg.emit_input, "add the assembled model input to each row");

  auto* score = app.add_subcommand("score", "score predictions against references");
  score->add_option("--predictions", cfg.predictions, "{id, caption} JSON Lines")->required();
  score->add_option("--references", cfg.references, "{id, caption} JSON Lines")->required();
  score->add_option("--label", label, "method label for the report row");
  score->add_option("-o,--output", cfg.output, "write the JSON report here");

  auto* fuse = app.add_subcommand("fuse", "consensus-select one caption per id from N files");
  fuse->add_option("files", cfg.inputs, "{id, caption} JSON Lines, one per model")->required();
  fuse->add_option("-o,--output", cfg.output, "fused JSON Lines output")->required();

  auto* rank = app.add_subcommand("rank", "evaluate ranking losses over candidate sets");
  rank->add_option("candidates", cfg.inputs, "candidate-set JSON Lines file")->required()->expected(1);
  rank->add_option("-o,--output", cfg.output, "loss JSON Lines output")->required();

  auto* report = app.add_subcommand("report", "combine score reports into one table");
  report->add_option("scores", cfg.inputs, "score JSON files")->required();
  report->add_option("--label", cfg.labels, "row labels, in file order");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitFormat;
  }

  try {
    std::map<std::string, std::string> given;
    for (const auto& [key, opt] : flag_options) {
      if (opt->count() > 0) given[key] = flag_text[key];
    }
    cfg.settings = resolve_settings(config_path, given);
    cfg.subcommand = app.get_subcommands().front()->get_name();
    if (!label.empty()) cfg.labels = {label};
    cfg.normalizer();  // validate early
    err << "effective config: " << cfg.to_json().dump() << '\n';

    if (cfg.subcommand == "ingest") return cmd_ingest(cfg, out);
    if (cfg.subcommand == "refine") return cmd_refine(cfg, out, err);
    if (cfg.subcommand == "score") return cmd_score(cfg, out);
    if (cfg.subcommand == "fuse") return cmd_fuse(cfg, out);
    if (cfg.subcommand == "rank") return cmd_rank(cfg, out);
    if (cfg.subcommand == "report") return cmd_report(cfg, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const AlignmentError& e) {
    err << "error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const std::domain_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFormat;
  }
  return kExitFormat;
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace figcap::cli
