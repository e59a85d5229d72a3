// predbias command-line tool. Exit codes: 0 success, 1 runtime or
// validation failure, 2 configuration error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "predbias/pipeline.hpp"
#include "predbias/predbias.hpp"

namespace fs = std::filesystem;
using namespace predbias;

namespace {

unsigned evaluation_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PREDBIAS_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || cap < 1) throw ConfigError("PREDBIAS_THREADS must be a positive integer");
    n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

/// Provenance block for single-stage outputs: command, parameters, inputs.
struct Provenance {
  Json doc;

  explicit Provenance(std::string command) {
    doc["command"] = std::move(command);
    doc["params"] = Json::object();
    doc["inputs"] = Json::object();
  }
  Provenance& input(const char* role, const fs::path& path) {
    doc["inputs"][role] = input_record(path);
    return *this;
  }
  template <typename T>
  Provenance& param(const char* key, const T& value) {
    doc["params"][key] = value;
    return *this;
  }
};

void emit(const fs::path& out, Json doc, const Provenance& prov) {
  write_artifact(out, dump_document(with_provenance(std::move(doc), prov.doc)));
  std::cout << out.string() << "\n";
}

// Shared flag storage. Every command reads the subset it registered.
struct Flags {
  std::string config, vocab, train, test, out, model, transition, confusion, overlap, partition, ic, external_ic;
  std::string strategy, transition_source, averaging, partition_ic;
  double alpha = 1.0, epsilon = 1.0, ic_base = 2.0;
  std::size_t m = 15;
  std::int64_t n = 2000;
  std::uint64_t seed = 0;
  std::vector<std::size_t> ks{20, 50, 100};
  bool all_pairs = false, no_graph_constraint = false;
};

EvalOptions eval_options(const Flags& f) {
  EvalOptions eo;
  eo.ks = f.ks;
  eo.rank.all_pairs = f.all_pairs;
  eo.rank.graph_constraint = !f.no_graph_constraint;
  if (!f.averaging.empty()) eo.averaging = averaging_from_string(f.averaging);
  eo.threads = evaluation_threads();
  return eo;
}

int cmd_gen_synth(const Flags& f, const CLI::Option* seed_opt) {
  const auto doc = read_document(f.config);
  auto cfg = synth_config_from_json(doc, f.config, /*require_seed=*/seed_opt->count() == 0);
  if (seed_opt->count()) cfg.seed = f.seed;
  const auto syn = generate_synthetic(cfg);
  const fs::path dir = f.out;
  write_artifact(dir / "vocab.json", dump_document(syn.train.vocabulary.to_json()));
  write_artifact(dir / "train.jsonl", serialize_dataset(syn.train));
  write_artifact(dir / "test.jsonl", serialize_dataset(syn.test));
  write_artifact(dir / "manifest.json", dump_document(synth_manifest(cfg, syn)));
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_fit_freq(const Flags& f) {
  const auto vocab = load_vocabulary(f.vocab);
  const auto train = load_dataset_or_warn(f.train, vocab, SplitTag::train, &std::cerr);
  const auto model = FrequencyModel::fit(train, f.epsilon);
  emit(f.out, model_to_json(model),
       Provenance("fit-freq").input("vocab", f.vocab).input("train", f.train).param("epsilon", f.epsilon));
  return 0;
}

int cmd_build_confusion(const Flags& f) {
  const auto vocab = load_vocabulary(f.vocab);
  const auto train = load_dataset_or_warn(f.train, vocab, SplitTag::train, &std::cerr);
  const auto model = load_model(f.model, vocab);
  Provenance prov("build-confusion");
  prov.input("vocab", f.vocab).input("train", f.train).input("model", f.model);
  std::optional<TransitionMatrix> tm;
  if (!f.transition.empty()) {
    tm = load_transition(f.transition, vocab);
    prov.input("transition", f.transition);
  }
  emit(f.out, confusion_to_json(build_confusion(model, train, tm ? &*tm : nullptr), vocab), prov);
  return 0;
}

int cmd_build_bipartite(const Flags& f) {
  const auto vocab = load_vocabulary(f.vocab);
  const auto train = load_dataset_or_warn(f.train, vocab, SplitTag::train, &std::cerr);
  emit(f.out, overlap_to_json(build_overlap(train), vocab),
       Provenance("build-bipartite").input("vocab", f.vocab).input("train", f.train));
  return 0;
}

int cmd_build_transition(const Flags& f) {
  const auto vocab = load_vocabulary(f.vocab);
  const auto source = optional_transition_from_string(f.transition_source);
  if (!source) throw ConfigError("--transition-source must name a matrix source");
  Provenance prov("build-transition");
  prov.input("vocab", f.vocab).param("transition_source", f.transition_source).param("alpha", f.alpha);
  std::optional<ConfusionMatrix> cm;
  std::optional<OverlapMatrix> om;
  std::optional<PredicatePartition> part;
  if (*source == TransitionSource::cm || *source == TransitionSource::ccm) {
    if (f.confusion.empty()) throw ConfigError("--confusion is required for " + f.transition_source);
    cm = confusion_from_json(read_document(f.confusion), vocab, f.confusion);
    prov.input("confusion", f.confusion);
  } else {
    if (f.overlap.empty()) throw ConfigError("--overlap is required for " + f.transition_source);
    om = overlap_from_json(read_document(f.overlap), vocab, f.overlap);
    prov.input("overlap", f.overlap);
    if (*source == TransitionSource::sobg) {
      if (f.partition.empty()) throw ConfigError("--partition is required for sobg");
      part = partition_from_json(read_document(f.partition), vocab, f.partition);
      prov.input("partition", f.partition);
    }
  }
  const auto tm = build_transition(*source, f.alpha, cm ? &*cm : nullptr, om ? &*om : nullptr,
                                   part ? &*part : nullptr);
  emit(f.out, transition_to_json(tm, vocab), prov);
  return 0;
}

int cmd_ic(const Flags& f) {
  const auto vocab = load_vocabulary(f.vocab);
  Provenance prov("ic");
  prov.input("vocab", f.vocab).param("ic_base", f.ic_base);
  InformationContentTable table;
  if (!f.external_ic.empty()) {
    table = load_external_ic(f.external_ic, vocab, f.ic_base);
    prov.input("external_ic", f.external_ic);
  } else {
    if (f.train.empty()) throw ConfigError("ic needs --train or --external-ic");
    table = compute_ic(load_dataset_or_warn(f.train, vocab, SplitTag::train, &std::cerr), f.ic_base);
    prov.input("train", f.train);
  }
  emit(f.out, ic_table_to_json(table, vocab), prov);
  return 0;
}

int cmd_partition(const Flags& f) {
  const auto vocab = load_vocabulary(f.vocab);
  const auto table = ic_table_from_json(read_document(f.ic), vocab, f.ic);
  emit(f.out, partition_to_json(partition_predicates(table, f.m), vocab),
       Provenance("partition").input("vocab", f.vocab).input("ic", f.ic).param("m", f.m));
  return 0;
}

int cmd_balance(const Flags& f) {
  const auto vocab = load_vocabulary(f.vocab);
  const auto train = load_dataset_or_warn(f.train, vocab, SplitTag::train, &std::cerr);
  const auto part = partition_from_json(read_document(f.partition), vocab, f.partition);
  const auto strategy = balance_strategy_from_string(f.strategy);
  Provenance prov("balance");
  prov.input("vocab", f.vocab).input("train", f.train).input("partition", f.partition);
  prov.param("strategy", f.strategy).param("n", f.n);
  AdjustedDomain dom;
  if (strategy == BalanceStrategy::blru) {
    dom = build_blru(train, part, f.n, f.seed);
    prov.param("seed", f.seed);
  } else {
    if (f.model.empty()) throw ConfigError("--model is required for blra");
    dom = build_blra(train, part, f.n, load_model(f.model, vocab));
    prov.input("model", f.model);
  }
  const fs::path out = f.out;
  const auto bytes = serialize_dataset(dom.dataset);
  write_artifact(out, bytes);
  auto side = provenance_to_json(dom);
  side["dataset_file"] = out.filename().string();
  side["dataset_digest"] = content_digest(bytes);
  std::cout << out.string() << "\n";
  emit(out.string() + ".provenance.json", side, prov);
  return 0;
}

int cmd_evaluate(const Flags& f) {
  const auto vocab = load_vocabulary(f.vocab);
  Provenance prov("evaluate");
  prov.input("vocab", f.vocab).input("model", f.model).input("test", f.test);
  // Every input is loaded and checked before any scoring starts.
  const auto model = load_model(f.model, vocab);
  std::optional<TransitionMatrix> tm;
  if (!f.transition.empty()) {
    tm = load_transition(f.transition, vocab);
    prov.input("transition", f.transition);
  }
  const auto test = load_dataset_or_warn(f.test, vocab, SplitTag::test, &std::cerr);
  std::optional<InformationContentTable> ic, external;
  if (!f.ic.empty()) {
    ic = ic_table_from_json(read_document(f.ic), vocab, f.ic);
    prov.input("ic", f.ic);
  }
  if (!f.external_ic.empty()) {
    external = load_external_ic(f.external_ic, vocab, f.ic_base);
    prov.input("external_ic", f.external_ic);
  }
  const auto eo = eval_options(f);
  prov.param("k", eo.ks).param("all_pairs", eo.rank.all_pairs).param("graph_constraint", eo.rank.graph_constraint);
  prov.param("averaging", to_string(eo.averaging));
  const auto report = evaluate(model, tm ? &*tm : nullptr, test, eo, ic ? &*ic : nullptr,
                               external ? &*external : nullptr);
  emit(f.out, report_to_json(report, vocab), prov);
  std::string label = fs::path(f.model).stem().string();
  if (tm) label += "+" + std::string(to_string(tm->source()));
  std::cout << format_summary_table({{label, &report}});
  return 0;
}

int cmd_report_confusion(const Flags& f) {
  const auto vocab = load_vocabulary(f.vocab);
  Provenance prov("report-confusion");
  prov.input("vocab", f.vocab).input("model", f.model).input("test", f.test).input("ic", f.ic);
  const auto model = load_model(f.model, vocab);
  std::optional<TransitionMatrix> tm;
  if (!f.transition.empty()) {
    tm = load_transition(f.transition, vocab);
    prov.input("transition", f.transition);
  }
  const auto ds = load_dataset_or_warn(f.test, vocab, SplitTag::test, &std::cerr);
  const auto table = ic_table_from_json(read_document(f.ic), vocab, f.ic);
  const auto rep = confusion_report(model, tm ? &*tm : nullptr, ds, table);
  auto doc = confusion_to_json(rep.confusion, vocab);
  doc["trace_fraction"] = rep.confusion.normalized_trace_fraction();
  doc["raw_trace_fraction"] = rep.confusion.raw_trace_fraction();
  Json axis = Json::array();
  for (auto k : table.order_by_increasing_ic()) axis.push_back(vocab.predicate_label(k));
  doc["heatmap_axis"] = std::move(axis);
  doc["heatmap"] = heatmap_to_json(rep.heatmap);
  emit(f.out, doc, prov);
  return 0;
}

int cmd_run_pipeline(const Flags& f, const CLI::App& sub) {
  RunConfig cfg;
  if (!f.config.empty()) {
    const fs::path path = f.config;
    apply_run_config(cfg, read_document(path), path.parent_path(), path.string());
  }
  // Flags given on the command line override the config document.
  const auto given = [&](const char* name) { return sub.get_option(name)->count() > 0; };
  if (given("--vocab")) cfg.vocab = f.vocab;
  if (given("--train")) cfg.train = f.train;
  if (given("--test")) cfg.test = f.test;
  if (given("--out")) cfg.out = f.out;
  if (given("--external-ic")) cfg.external_ic = fs::path(f.external_ic);
  if (given("--alpha")) cfg.alpha = f.alpha;
  if (given("--m")) cfg.m = f.m;
  if (given("--n")) cfg.n = f.n;
  if (given("--ic-base")) cfg.ic_base = f.ic_base;
  if (given("--epsilon")) cfg.epsilon = f.epsilon;
  if (given("--strategy")) cfg.strategy = optional_strategy_from_string(f.strategy);
  if (given("--transition-source")) cfg.transition_source = optional_transition_from_string(f.transition_source);
  if (given("--seed")) cfg.seed = f.seed;
  if (given("--k")) cfg.ks = f.ks;
  if (given("--all-pairs")) cfg.all_pairs = f.all_pairs;
  if (given("--no-graph-constraint")) cfg.graph_constraint = !f.no_graph_constraint;
  if (given("--averaging")) cfg.averaging = averaging_from_string(f.averaging);
  if (given("--partition-ic")) {
    if (f.partition_ic != "dataset" && f.partition_ic != "external")
      throw ConfigError("--partition-ic must be dataset or external");
    cfg.partition_by_external_ic = f.partition_ic == "external";
  }
  cfg.threads = evaluation_threads();
  cfg.warnings = &std::cerr;
  const auto outcome = run_pipeline(cfg);
  std::cout << outcome.run_dir.string() << "\n";
  std::string label = cfg.strategy ? std::string(to_string(*cfg.strategy)) : "baseline";
  if (cfg.transition_source) label += "+" + std::string(to_string(*cfg.transition_source));
  std::cout << format_summary_table({{label, &outcome.report}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Predicate debiasing toolkit"};
  app.require_subcommand(1);
  Flags f;

  const auto add_vocab = [&](CLI::App* s) { s->add_option("--vocab", f.vocab, "vocabulary document")->required(); };
  const auto add_out = [&](CLI::App* s, const char* what) { s->add_option("--out", f.out, what)->required(); };
  const auto add_eval = [&](CLI::App* s) {
    s->add_option("--k", f.ks, "recall cutoffs, comma separated")->delimiter(',');
    s->add_flag("--all-pairs", f.all_pairs, "score every ordered object pair");
    s->add_flag("--no-graph-constraint", f.no_graph_constraint, "allow several predicates per pair");
    s->add_option("--averaging", f.averaging, "R@K averaging: per_image or pooled");
  };

  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic train/test benchmark");
  gen->add_option("--config", f.config, "synthetic config document")->required();
  auto* gen_seed = gen->add_option("--seed", f.seed, "overrides the config seed");
  add_out(gen, "output directory");

  auto* fit = app.add_subcommand("fit-freq", "fit the frequency model");
  add_vocab(fit);
  fit->add_option("--train", f.train)->required();
  fit->add_option("--epsilon", f.epsilon, "additive smoothing");
  add_out(fit, "model file");

  auto* conf = app.add_subcommand("build-confusion", "confusion of a model on a dataset");
  add_vocab(conf);
  conf->add_option("--train", f.train)->required();
  conf->add_option("--model", f.model)->required();
  conf->add_option("--transition", f.transition, "debias before the argmax");
  add_out(conf, "confusion file");

  auto* bip = app.add_subcommand("build-bipartite", "subject-object overlap counts");
  add_vocab(bip);
  bip->add_option("--train", f.train)->required();
  add_out(bip, "overlap file");

  auto* trans = app.add_subcommand("build-transition", "transition matrix from a confusion or overlap file");
  add_vocab(trans);
  trans->add_option("--transition-source", f.transition_source, "cm, ccm, soo or sobg")->required();
  trans->add_option("--alpha", f.alpha, "diagonal smoothing");
  trans->add_option("--confusion", f.confusion);
  trans->add_option("--overlap", f.overlap);
  trans->add_option("--partition", f.partition);
  add_out(trans, "transition file");

  auto* ic = app.add_subcommand("ic", "information content table");
  add_vocab(ic);
  ic->add_option("--train", f.train);
  ic->add_option("--external-ic", f.external_ic, "external predicate counts");
  ic->add_option("--ic-base", f.ic_base);
  add_out(ic, "ic table file");

  auto* part = app.add_subcommand("partition", "split predicates into common and informative");
  add_vocab(part);
  part->add_option("--ic", f.ic, "ic table file")->required();
  part->add_option("--m", f.m, "number of common predicates");
  add_out(part, "partition file");

  auto* bal = app.add_subcommand("balance", "build an adjusted domain");
  add_vocab(bal);
  bal->add_option("--train", f.train)->required();
  bal->add_option("--partition", f.partition)->required();
  bal->add_option("--strategy", f.strategy, "blru or blra")->required();
  bal->add_option("--n", f.n, "per-predicate quota");
  bal->add_option("--seed", f.seed);
  bal->add_option("--model", f.model, "stage-1 model (blra)");
  add_out(bal, "adjusted dataset file");

  auto* run = app.add_subcommand("run-pipeline", "full pipeline plus evaluation");
  run->add_option("--config", f.config, "key-value run config");
  run->add_option("--vocab", f.vocab);
  run->add_option("--train", f.train);
  run->add_option("--test", f.test);
  run->add_option("--out", f.out, "output root");
  run->add_option("--external-ic", f.external_ic);
  run->add_option("--alpha", f.alpha);
  run->add_option("--m", f.m);
  run->add_option("--n", f.n);
  run->add_option("--ic-base", f.ic_base);
  run->add_option("--epsilon", f.epsilon);
  run->add_option("--strategy", f.strategy, "blru, blra or none");
  run->add_option("--transition-source", f.transition_source, "cm, ccm, soo, sobg or none");
  run->add_option("--seed", f.seed);
  run->add_option("--partition-ic", f.partition_ic, "dataset or external");
  add_eval(run);

  auto* ev = app.add_subcommand("evaluate", "evaluate persisted artifacts");
  add_vocab(ev);
  ev->add_option("--model", f.model)->required();
  ev->add_option("--transition", f.transition);
  ev->add_option("--test", f.test)->required();
  ev->add_option("--ic", f.ic, "dataset ic table for mRIC");
  ev->add_option("--external-ic", f.external_ic, "external predicate counts for mRIC");
  ev->add_option("--ic-base", f.ic_base);
  add_eval(ev);
  add_out(ev, "report file");

  auto* rc = app.add_subcommand("report-confusion", "confusion heatmap in increasing-IC order");
  add_vocab(rc);
  rc->add_option("--model", f.model)->required();
  rc->add_option("--transition", f.transition);
  rc->add_option("--test", f.test)->required();
  rc->add_option("--ic", f.ic, "ic table that orders the axes")->required();
  add_out(rc, "report file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_synth(f, gen_seed);
    if (fit->parsed()) return cmd_fit_freq(f);
    if (conf->parsed()) return cmd_build_confusion(f);
    if (bip->parsed()) return cmd_build_bipartite(f);
    if (trans->parsed()) return cmd_build_transition(f);
    if (ic->parsed()) return cmd_ic(f);
    if (part->parsed()) return cmd_partition(f);
    if (bal->parsed()) return cmd_balance(f);
    if (run->parsed()) return cmd_run_pipeline(f, *run);
    if (ev->parsed()) return cmd_evaluate(f);
    if (rc->parsed()) return cmd_report_confusion(f);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
