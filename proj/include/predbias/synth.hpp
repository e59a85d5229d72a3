#pragma once

// Synthetic long-tailed relationship datasets with planted predicate
// hierarchy and label ambiguity.
//
// Construction:
//   * target marginal w_k ∝ (k+1)^-s over predicates 0..K-1;
//   * predicates 0..M-1 are common parents; each informative predicate is
//     given a parent by shuffling the informative indices and dealing them
//     round-robin over the parents;
//   * every predicate owns `contexts_per_predicate` distinct
//     (subject label, object label) cells; a parent's context set is its own
//     cells plus all of its children's cells;
//   * a triplet's generating predicate is drawn by inverse CDF, its context
//     uniformly from that predicate's context set; an informative triplet is
//     relabeled to its parent with probability rho;
//   * generating weights are corrected for the relabeling so the observed
//     marginal matches w: g_k = w_k / (1 - rho) for informative k, and
//     g_p = w_p - rho * sum of g over p's children.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "predbias/dataset.hpp"
#include "predbias/error.hpp"
#include "predbias/freq_model.hpp"
#include "predbias/io.hpp"
#include "predbias/rng.hpp"

namespace predbias {

struct SynthConfig {
  std::size_t num_objects = 30;
  std::size_t num_predicates = 20;
  std::size_t num_common = 5;
  double zipf_exponent = 1.5;
  double ambiguity_rate = 0.3;
  std::size_t num_images = 5000;
  std::size_t num_test_images = 1000;
  std::size_t min_objects_per_image = 16;
  std::size_t max_objects_per_image = 64;
  std::size_t contexts_per_predicate = 10;
  std::uint64_t seed = 42;

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

inline void validate(const SynthConfig& c) {
  if (c.num_objects < 1) throw ConfigError("num_objects must be >= 1");
  if (c.num_predicates < 2) throw ConfigError("num_predicates must be >= 2");
  if (c.num_common < 1 || c.num_common >= c.num_predicates)
    throw ConfigError("num_common must satisfy 1 <= num_common < num_predicates");
  if (!(c.zipf_exponent >= 0) || !std::isfinite(c.zipf_exponent)) throw ConfigError("zipf_exponent must be >= 0");
  if (!(c.ambiguity_rate >= 0 && c.ambiguity_rate <= 1)) throw ConfigError("ambiguity_rate must lie in [0, 1]");
  if (c.min_objects_per_image < 2 || c.max_objects_per_image < c.min_objects_per_image)
    throw ConfigError("objects_per_image range must be non-empty and start at >= 2");
  if (c.contexts_per_predicate < 1) throw ConfigError("contexts_per_predicate must be >= 1");
  if (c.contexts_per_predicate * c.num_predicates > c.num_objects * c.num_objects)
    throw ConfigError("infeasible config: contexts_per_predicate * num_predicates exceeds num_objects^2");
}

inline Json synth_config_to_json(const SynthConfig& c) {
  Json j;
  j["num_objects"] = c.num_objects;
  j["num_predicates"] = c.num_predicates;
  j["num_common"] = c.num_common;
  j["zipf_exponent"] = c.zipf_exponent;
  j["ambiguity_rate"] = c.ambiguity_rate;
  j["num_images"] = c.num_images;
  j["num_test_images"] = c.num_test_images;
  j["objects_per_image"] = {c.min_objects_per_image, c.max_objects_per_image};
  j["contexts_per_predicate"] = c.contexts_per_predicate;
  j["seed"] = c.seed;
  return j;
}

/// Every field is required except seed, which may come from elsewhere.
inline SynthConfig synth_config_from_json(const Json& j, const std::string& source = "<synth-config>",
                                          bool require_seed = true) {
  SynthConfig c;
  c.num_objects = require_field<std::size_t>(j, "num_objects", source);
  c.num_predicates = require_field<std::size_t>(j, "num_predicates", source);
  c.num_common = require_field<std::size_t>(j, "num_common", source);
  c.zipf_exponent = require_field<double>(j, "zipf_exponent", source);
  c.ambiguity_rate = require_field<double>(j, "ambiguity_rate", source);
  c.num_images = require_field<std::size_t>(j, "num_images", source);
  c.num_test_images = require_field<std::size_t>(j, "num_test_images", source);
  const auto range = require_field<std::vector<std::size_t>>(j, "objects_per_image", source);
  if (range.size() != 2) throw ConfigError(source + ": field 'objects_per_image' must be [min, max]");
  c.min_objects_per_image = range[0];
  c.max_objects_per_image = range[1];
  c.contexts_per_predicate = require_field<std::size_t>(j, "contexts_per_predicate", source);
  if (require_seed || j.contains("seed")) c.seed = require_field<std::uint64_t>(j, "seed", source);
  return c;
}

struct SynthResult {
  Dataset train;
  Dataset test;
  std::vector<LabelIndex> parent;              // parent[k]; commons map to themselves
  std::vector<std::vector<Context>> contexts;  // context set per predicate
  std::vector<double> target_marginal;         // normalized Zipf weights
  std::vector<double> generating_weights;      // normalized, after relabel correction
  // Generating predicate of every triplet, [image][triplet], before relabeling.
  std::vector<std::vector<LabelIndex>> train_generators;
  std::vector<std::vector<LabelIndex>> test_generators;
};

namespace detail {

inline std::string padded(const char* prefix, std::size_t i, std::size_t n) {
  const int width = n <= 1 ? 1 : static_cast<int>(std::to_string(n - 1).size());
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
  return buf;
}

inline Dataset synth_split(const SynthConfig& c, const Vocabulary& vocab, const SynthResult& plan,
                           std::size_t num_images, const char* prefix, SplitTag tag, Rng& rng,
                           std::vector<std::vector<LabelIndex>>& generators) {
  const auto k = c.num_predicates;
  std::vector<double> cdf(k);
  std::partial_sum(plan.generating_weights.begin(), plan.generating_weights.end(), cdf.begin());
  Dataset ds{vocab, {}, tag};
  ds.images.reserve(num_images);
  generators.assign(num_images, {});
  for (std::size_t i = 0; i < num_images; ++i) {
    ImageRecord img;
    img.image_id = padded(prefix, i, std::max<std::size_t>(num_images, 1000000));
    const auto num_objects = static_cast<std::size_t>(rng.between(c.min_objects_per_image, c.max_objects_per_image));
    for (std::size_t j = 0; j + 1 < num_objects; j += 2) {
      const double u = rng.uniform01() * cdf.back();
      const auto gen = std::min<std::size_t>(
          static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()), k - 1);
      const auto& ctxs = plan.contexts[gen];
      const auto ctx = ctxs[static_cast<std::size_t>(rng.below(ctxs.size()))];
      auto label = static_cast<LabelIndex>(gen);
      if (gen >= c.num_common && rng.uniform01() < c.ambiguity_rate) label = plan.parent[gen];
      const auto subj = static_cast<InstanceId>(j);
      img.objects.push_back({subj, ctx.first, std::nullopt});
      img.objects.push_back({subj + 1, ctx.second, std::nullopt});
      img.triplets.push_back({subj, subj + 1, label});
      generators[i].push_back(static_cast<LabelIndex>(gen));
    }
    if (num_objects % 2 == 1)
      img.objects.push_back({static_cast<InstanceId>(num_objects - 1),
                             static_cast<LabelIndex>(rng.below(c.num_objects)), std::nullopt});
    ds.images.push_back(std::move(img));
  }
  return ds;
}

}  // namespace detail

inline SynthResult generate_synthetic(const SynthConfig& c) {
  validate(c);
  const auto k = c.num_predicates;
  const auto m = c.num_common;
  const double rho = c.ambiguity_rate;
  Rng rng(c.seed);

  std::vector<std::string> objects, predicates;
  for (std::size_t i = 0; i < c.num_objects; ++i) objects.push_back(detail::padded("obj_", i, c.num_objects));
  for (std::size_t i = 0; i < k; ++i) predicates.push_back(detail::padded("pred_", i, k));
  const Vocabulary vocab(std::move(objects), std::move(predicates));

  SynthResult r;
  r.target_marginal.resize(k);
  for (std::size_t i = 0; i < k; ++i) r.target_marginal[i] = std::pow(static_cast<double>(i + 1), -c.zipf_exponent);
  const double wsum = std::accumulate(r.target_marginal.begin(), r.target_marginal.end(), 0.0);
  for (auto& w : r.target_marginal) w /= wsum;

  std::vector<LabelIndex> informative(k - m);
  std::iota(informative.begin(), informative.end(), static_cast<LabelIndex>(m));
  shuffle(std::span(informative), rng);
  r.parent.resize(k);
  for (std::size_t p = 0; p < m; ++p) r.parent[p] = static_cast<LabelIndex>(p);
  for (std::size_t i = 0; i < informative.size(); ++i) r.parent[informative[i]] = static_cast<LabelIndex>(i % m);

  if (rho >= 1.0 && k > m)
    throw ConfigError("infeasible config: ambiguity_rate 1 leaves informative predicates unobservable");
  std::vector<double> g(k);
  for (std::size_t i = m; i < k; ++i) g[i] = r.target_marginal[i] / (1.0 - rho);
  for (std::size_t p = 0; p < m; ++p) {
    double moved = 0;
    for (std::size_t i = m; i < k; ++i)
      if (r.parent[i] == p) moved += rho * g[i];
    g[p] = r.target_marginal[p] - moved;
    if (!(g[p] > 0))
      throw ConfigError("infeasible config: relabeling mass exceeds the marginal of common predicate " +
                        std::to_string(p));
  }
  const double gsum = std::accumulate(g.begin(), g.end(), 0.0);
  for (auto& v : g) v /= gsum;
  r.generating_weights = g;

  const auto v = c.num_objects;
  std::vector<Context> cells;
  cells.reserve(v * v);
  for (LabelIndex s = 0; s < v; ++s)
    for (LabelIndex o = 0; o < v; ++o) cells.emplace_back(s, o);
  shuffle(std::span(cells), rng);
  const auto cpp = c.contexts_per_predicate;
  r.contexts.assign(k, {});
  for (std::size_t i = 0; i < k; ++i)
    r.contexts[i].assign(cells.begin() + static_cast<std::ptrdiff_t>(i * cpp),
                         cells.begin() + static_cast<std::ptrdiff_t>((i + 1) * cpp));
  for (std::size_t i = m; i < k; ++i) {
    auto& parent_ctx = r.contexts[r.parent[i]];
    parent_ctx.insert(parent_ctx.end(), r.contexts[i].begin(), r.contexts[i].end());
  }

  r.train = detail::synth_split(c, vocab, r, c.num_images, "train_", SplitTag::train, rng, r.train_generators);
  r.test = detail::synth_split(c, vocab, r, c.num_test_images, "test_", SplitTag::test, rng, r.test_generators);
  return r;
}

/// Manifest: config echo, planted parent map, context sets, and marginals.
inline Json synth_manifest(const SynthConfig& c, const SynthResult& r) {
  const auto& vocab = r.train.vocabulary;
  Json parents = Json::object();
  Json contexts = Json::object();
  for (std::size_t k = 0; k < r.parent.size(); ++k) {
    const auto& label = vocab.predicate_label(static_cast<LabelIndex>(k));
    parents[label] = vocab.predicate_label(r.parent[k]);
    Json ctx = Json::array();
    for (const auto& [s, o] : r.contexts[k]) ctx.push_back({vocab.object_label(s), vocab.object_label(o)});
    contexts[label] = std::move(ctx);
  }
  Json doc;
  doc["kind"] = "synthetic_manifest";
  doc["config"] = synth_config_to_json(c);
  doc["vocab_digest"] = vocab.digest();
  doc["parent"] = std::move(parents);
  doc["target_marginal"] = r.target_marginal;
  doc["generating_weights"] = r.generating_weights;
  doc["contexts"] = std::move(contexts);
  doc["train_triplets"] = r.train.num_triplets();
  doc["test_triplets"] = r.test.num_triplets();
  return doc;
}

}  // namespace predbias
