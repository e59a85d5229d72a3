#pragma once

// End-to-end run: load inputs, run the three-stage pipeline, evaluate, and
// persist every artifact under <out>/run-<config digest>/.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "predbias/balanced_learning.hpp"
#include "predbias/dataset.hpp"
#include "predbias/error.hpp"
#include "predbias/freq_model.hpp"
#include "predbias/information_content.hpp"
#include "predbias/io.hpp"
#include "predbias/metrics.hpp"
#include "predbias/semantic_debias.hpp"

namespace predbias {

struct RunConfig {
  std::filesystem::path vocab;
  std::filesystem::path train;
  std::filesystem::path test;
  std::filesystem::path out;
  std::optional<std::filesystem::path> external_ic;
  double alpha = 1.0;
  std::size_t m = 15;
  std::int64_t n = 2000;
  double ic_base = 2.0;
  double epsilon = 1.0;
  std::optional<BalanceStrategy> strategy;
  std::optional<TransitionSource> transition_source;
  std::uint64_t seed = 0;
  std::vector<std::size_t> ks{20, 50, 100};
  bool all_pairs = false;
  bool graph_constraint = true;
  RecallAveraging averaging = RecallAveraging::per_image;
  bool partition_by_external_ic = false;
  unsigned threads = 1;  // affects speed only; not part of the echo
  std::ostream* warnings = nullptr;
};

inline std::optional<BalanceStrategy> optional_strategy_from_string(std::string_view s) {
  if (s == "none") return std::nullopt;
  return balance_strategy_from_string(s);
}

inline std::optional<TransitionSource> optional_transition_from_string(std::string_view s) {
  if (s == "none") return std::nullopt;
  const auto src = transition_source_from_string(s);
  if (src == TransitionSource::rm) throw ConfigError("transition source 'rm' is not supported");
  return src;
}

inline RecallAveraging averaging_from_string(std::string_view s) {
  if (s == "per_image") return RecallAveraging::per_image;
  if (s == "pooled") return RecallAveraging::pooled;
  throw ConfigError("unknown averaging '" + std::string(s) + "' (expected per_image or pooled)");
}

/// Applies a key-value config document. Keys match the command-line flag
/// names; relative paths resolve against base_dir. Unknown keys are errors.
inline void apply_run_config(RunConfig& cfg, const Json& doc, const std::filesystem::path& base_dir,
                             const std::string& source) {
  if (!doc.is_object()) throw ConfigError(source + ": config must be a key-value document");
  static const std::set<std::string> known{"vocab", "train", "test", "out", "external-ic", "alpha", "m", "n",
                                           "ic-base", "epsilon", "strategy", "transition-source", "seed", "k",
                                           "all-pairs", "no-graph-constraint", "averaging", "partition-ic"};
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!known.count(it.key())) throw ConfigError(source + ": unknown config field '" + it.key() + "'");
  const auto path = [&](const char* key) { return base_dir / require_field<std::string>(doc, key, source); };
  if (doc.contains("vocab")) cfg.vocab = path("vocab");
  if (doc.contains("train")) cfg.train = path("train");
  if (doc.contains("test")) cfg.test = path("test");
  if (doc.contains("out")) cfg.out = path("out");
  if (doc.contains("external-ic")) cfg.external_ic = path("external-ic");
  if (doc.contains("alpha")) cfg.alpha = require_field<double>(doc, "alpha", source);
  if (doc.contains("m")) cfg.m = require_field<std::size_t>(doc, "m", source);
  if (doc.contains("n")) cfg.n = require_field<std::int64_t>(doc, "n", source);
  if (doc.contains("ic-base")) cfg.ic_base = require_field<double>(doc, "ic-base", source);
  if (doc.contains("epsilon")) cfg.epsilon = require_field<double>(doc, "epsilon", source);
  if (doc.contains("strategy"))
    cfg.strategy = optional_strategy_from_string(require_field<std::string>(doc, "strategy", source));
  if (doc.contains("transition-source"))
    cfg.transition_source =
        optional_transition_from_string(require_field<std::string>(doc, "transition-source", source));
  if (doc.contains("seed")) cfg.seed = require_field<std::uint64_t>(doc, "seed", source);
  if (doc.contains("k")) cfg.ks = require_field<std::vector<std::size_t>>(doc, "k", source);
  if (doc.contains("all-pairs")) cfg.all_pairs = require_field<bool>(doc, "all-pairs", source);
  if (doc.contains("no-graph-constraint"))
    cfg.graph_constraint = !require_field<bool>(doc, "no-graph-constraint", source);
  if (doc.contains("averaging"))
    cfg.averaging = averaging_from_string(require_field<std::string>(doc, "averaging", source));
  if (doc.contains("partition-ic")) {
    const auto v = require_field<std::string>(doc, "partition-ic", source);
    if (v != "dataset" && v != "external")
      throw ConfigError(source + ": field 'partition-ic' must be dataset or external");
    cfg.partition_by_external_ic = v == "external";
  }
}

inline void validate(const RunConfig& cfg) {
  const auto need = [](const std::filesystem::path& p, const char* name) {
    if (p.empty()) throw ConfigError("missing config field '" + std::string(name) + "'");
  };
  need(cfg.vocab, "vocab");
  need(cfg.train, "train");
  need(cfg.test, "test");
  need(cfg.out, "out");
  if (!(cfg.alpha >= 0) || !std::isfinite(cfg.alpha)) throw ConfigError("alpha must be a finite value >= 0");
  if (cfg.m < 1) throw ConfigError("m must be >= 1");
  if (cfg.n < 1) throw ConfigError("n must be >= 1");
  if (!(cfg.ic_base > 1) || !std::isfinite(cfg.ic_base)) throw ConfigError("ic-base must be > 1");
  if (!(cfg.epsilon >= 0) || !std::isfinite(cfg.epsilon)) throw ConfigError("epsilon must be >= 0");
  if (cfg.ks.empty()) throw ConfigError("k must list at least one value");
  if (cfg.partition_by_external_ic && !cfg.external_ic)
    throw ConfigError("partition-ic=external requires external-ic");
}

inline Json input_record(const std::filesystem::path& path) {
  Json j;
  j["file"] = path.filename().string();
  j["digest"] = file_digest(path);
  return j;
}

/// Hyperparameters plus the name and digest of every input. Paths and the
/// output directory stay out so the echo is location independent.
inline Json run_config_echo(const RunConfig& cfg) {
  Json inputs;
  inputs["vocab"] = input_record(cfg.vocab);
  inputs["train"] = input_record(cfg.train);
  inputs["test"] = input_record(cfg.test);
  if (cfg.external_ic) inputs["external_ic"] = input_record(*cfg.external_ic);
  Json j;
  j["alpha"] = cfg.alpha;
  j["m"] = cfg.m;
  j["n"] = cfg.n;
  j["ic_base"] = cfg.ic_base;
  j["epsilon"] = cfg.epsilon;
  j["strategy"] = cfg.strategy ? std::string(to_string(*cfg.strategy)) : "none";
  j["transition_source"] = cfg.transition_source ? std::string(to_string(*cfg.transition_source)) : "none";
  j["seed"] = cfg.seed;
  j["k"] = cfg.ks;
  j["all_pairs"] = cfg.all_pairs;
  j["graph_constraint"] = cfg.graph_constraint;
  j["averaging"] = to_string(cfg.averaging);
  j["partition_ic"] = cfg.partition_by_external_ic ? "external" : "dataset";
  j["inputs"] = std::move(inputs);
  return j;
}

inline std::string run_id(const Json& echo) { return "run-" + content_digest(echo.dump()); }

inline Json with_provenance(Json doc, const Json& echo) {
  doc["run_config"] = echo;
  return doc;
}

struct RunOutcome {
  std::filesystem::path run_dir;
  PipelineResult pipeline;
  EvaluationReport report;
};

inline RunOutcome run_pipeline(const RunConfig& cfg) {
  run_stage("config", [&] { validate(cfg); });
  struct Inputs {
    Json echo;
    Vocabulary vocab;
    Dataset train, test;
    std::optional<InformationContentTable> external;
  };
  auto in = run_stage("load", [&] {
    auto vocab = load_vocabulary(cfg.vocab);
    auto train = load_dataset_or_warn(cfg.train, vocab, SplitTag::train, cfg.warnings);
    auto test = load_dataset_or_warn(cfg.test, vocab, SplitTag::test, cfg.warnings);
    std::optional<InformationContentTable> external;
    if (cfg.external_ic) external = load_external_ic(*cfg.external_ic, vocab, cfg.ic_base);
    return Inputs{run_config_echo(cfg), std::move(vocab), std::move(train), std::move(test), std::move(external)};
  });

  PipelineConfig pc;
  pc.strategy = cfg.strategy;
  pc.transition_source = cfg.transition_source;
  pc.num_common = cfg.m;
  pc.quota = cfg.n;
  pc.alpha = cfg.alpha;
  pc.epsilon = cfg.epsilon;
  pc.ic_base = cfg.ic_base;
  pc.seed = cfg.seed;
  pc.use_external_ic_for_partition = cfg.partition_by_external_ic;
  auto result = bpl_pipeline(in.train, pc, in.external ? &*in.external : nullptr);

  EvalOptions eo;
  eo.ks = cfg.ks;
  eo.rank.all_pairs = cfg.all_pairs;
  eo.rank.graph_constraint = cfg.graph_constraint;
  eo.averaging = cfg.averaging;
  eo.threads = cfg.threads;
  auto report = run_stage("evaluate", [&] {
    return evaluate(result.predictor(), result.transition_or_null(), in.test, eo, &result.ic,
                    result.external_ic ? &*result.external_ic : nullptr);
  });

  const auto dir = cfg.out / run_id(in.echo);
  run_stage("write", [&] {
    const auto& v = in.vocab;
    const auto put = [&](const char* name, const Json& doc) {
      write_artifact(dir / name, dump_document(with_provenance(doc, in.echo)));
    };
    Json config_doc;
    config_doc["kind"] = "run_config";
    put("config.json", config_doc);
    put("model_original.json", model_to_json(result.original_model));
    put("ic_table.json", ic_table_to_json(result.ic, v));
    if (result.external_ic) put("ic_external.json", ic_table_to_json(*result.external_ic, v));
    put("partition.json", partition_to_json(result.partition, v));
    if (result.adjusted) {
      const auto bytes = serialize_dataset(result.adjusted->dataset);
      write_artifact(dir / "adjusted_train.jsonl", bytes);
      auto prov = provenance_to_json(*result.adjusted);
      prov["dataset_file"] = "adjusted_train.jsonl";
      prov["dataset_digest"] = content_digest(bytes);
      put("adjusted_provenance.json", prov);
      put("model_refit.json", model_to_json(*result.refit_model));
    }
    if (result.confusion) put("confusion.json", confusion_to_json(*result.confusion, v));
    if (result.overlap) put("overlap.json", overlap_to_json(*result.overlap, v));
    if (result.transition) put("transition.json", transition_to_json(*result.transition, v));
    put("report.json", report_to_json(report, v));
  });
  return {dir, std::move(result), std::move(report)};
}

}  // namespace predbias
