#pragma once

// Balanced predicate learning: build an adjusted domain that keeps every
// informative triplet and at most N triplets per common predicate, then refit
// the predictor on it.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "predbias/dataset.hpp"
#include "predbias/error.hpp"
#include "predbias/freq_model.hpp"
#include "predbias/information_content.hpp"
#include "predbias/io.hpp"
#include "predbias/rng.hpp"
#include "predbias/semantic_debias.hpp"

namespace predbias {

enum class BalanceStrategy { blru, blra };

inline std::string_view to_string(BalanceStrategy s) { return s == BalanceStrategy::blru ? "blru" : "blra"; }

inline BalanceStrategy balance_strategy_from_string(std::string_view s) {
  if (s == "blru") return BalanceStrategy::blru;
  if (s == "blra") return BalanceStrategy::blra;
  throw ConfigError("unknown strategy '" + std::string(s) + "' (expected blru or blra)");
}

/// Quota meaning "keep everything".
inline constexpr std::int64_t kUnlimitedQuota = std::numeric_limits<std::int64_t>::max();

struct PredicateQuota {
  LabelIndex predicate = 0;
  bool common = false;
  std::int64_t available = 0;
  std::int64_t kept = 0;
  std::int64_t dropped() const { return available - kept; }
};

struct AdjustedDomain {
  Dataset dataset;
  BalanceStrategy strategy = BalanceStrategy::blru;
  std::size_t num_common = 0;
  std::int64_t quota = 0;
  std::optional<std::uint64_t> seed;  // BLRU only
  std::vector<PredicateQuota> per_predicate;
};

namespace detail {

/// Location of a triplet plus its stable ordering key
/// (image_id, subject_id, object_id).
struct TripletRef {
  std::size_t image = 0;
  std::size_t index = 0;
  const std::string* image_id = nullptr;
  InstanceId subject_id = 0;
  InstanceId object_id = 0;

  friend bool stable_less(const TripletRef& a, const TripletRef& b) {
    return std::tie(*a.image_id, a.subject_id, a.object_id) < std::tie(*b.image_id, b.subject_id, b.object_id);
  }
};

/// Triplets grouped by predicate, each group sorted by the stable key.
inline std::vector<std::vector<TripletRef>> triplets_by_predicate(const Dataset& ds) {
  std::vector<std::vector<TripletRef>> groups(ds.vocabulary.num_predicates());
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const auto& img = ds.images[i];
    for (std::size_t j = 0; j < img.triplets.size(); ++j) {
      const auto& t = img.triplets[j];
      groups.at(t.predicate_index).push_back({i, j, &img.image_id, t.subject_id, t.object_id});
    }
  }
  for (auto& g : groups) std::sort(g.begin(), g.end(), [](const auto& a, const auto& b) { return stable_less(a, b); });
  return groups;
}

/// Copies ds keeping only flagged triplets, in their original in-image order.
/// Images that lose every triplet stay, with an empty list.
inline Dataset filter_triplets(const Dataset& ds, const std::vector<std::vector<bool>>& keep) {
  Dataset out{ds.vocabulary, {}, SplitTag::adjusted};
  out.images.reserve(ds.images.size());
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const auto& img = ds.images[i];
    ImageRecord copy{img.image_id, img.objects, {}};
    for (std::size_t j = 0; j < img.triplets.size(); ++j)
      if (keep[i][j]) copy.triplets.push_back(img.triplets[j]);
    out.images.push_back(std::move(copy));
  }
  return out;
}

template <typename SelectCommon>
AdjustedDomain build_adjusted(const Dataset& ds, const PredicatePartition& part, std::int64_t quota,
                              BalanceStrategy strategy, SelectCommon&& select) {
  const auto k = ds.vocabulary.num_predicates();
  if (part.size() != k)
    throw ValidationError(ValidationErrc::dimension_mismatch, "partition covers a different predicate count");
  if (quota < 1) throw ConfigError("sampling number N must be >= 1");

  std::vector<std::vector<bool>> keep(ds.images.size());
  for (std::size_t i = 0; i < ds.images.size(); ++i) keep[i].assign(ds.images[i].triplets.size(), true);

  AdjustedDomain out;
  out.strategy = strategy;
  out.num_common = part.common.size();
  out.quota = quota;
  const auto groups = triplets_by_predicate(ds);
  for (std::size_t p = 0; p < k; ++p) {
    const auto& group = groups[p];
    PredicateQuota q{static_cast<LabelIndex>(p), static_cast<bool>(part.is_common[p]),
                     static_cast<std::int64_t>(group.size()), static_cast<std::int64_t>(group.size())};
    if (q.common && q.available > quota) {
      for (const auto& ref : group) keep[ref.image][ref.index] = false;
      for (const auto& ref : select(static_cast<LabelIndex>(p), group)) keep[ref.image][ref.index] = true;
      q.kept = quota;
    }
    out.per_predicate.push_back(q);
  }
  out.dataset = filter_triplets(ds, keep);
  return out;
}

}  // namespace detail

/// Random undersampling. For each common predicate with more than N
/// triplets, the stable-key-sorted list is Fisher–Yates shuffled with a
/// per-predicate stream derived from seed and the first N are kept.
inline AdjustedDomain build_blru(const Dataset& ds, const PredicatePartition& part, std::int64_t quota,
                                 std::uint64_t seed) {
  auto out = detail::build_adjusted(
      ds, part, quota, BalanceStrategy::blru, [&](LabelIndex p, const std::vector<detail::TripletRef>& group) {
        auto pool = group;
        Rng rng(derive_seed(seed, p));
        shuffle(std::span(pool), rng);
        pool.resize(static_cast<std::size_t>(quota));
        return pool;
      });
  out.seed = seed;
  return out;
}

/// Ambiguity removal. Common-predicate triplets are scored by the
/// pre-trained model's probability of their ground-truth predicate; the N
/// most confident survive, ties broken by the stable key.
inline AdjustedDomain build_blra(const Dataset& ds, const PredicatePartition& part, std::int64_t quota,
                                 const FrequencyModel& model) {
  require_same_vocabulary(model.vocabulary(), ds.vocabulary, "build_blra");
  return detail::build_adjusted(
      ds, part, quota, BalanceStrategy::blra, [&](LabelIndex p, const std::vector<detail::TripletRef>& group) {
        std::vector<std::pair<double, detail::TripletRef>> scored;
        scored.reserve(group.size());
        for (const auto& ref : group) {
          const auto& img = ds.images[ref.image];
          const auto& t = img.triplets[ref.index];
          scored.push_back({model.predict(img.label_of(t.subject_id), img.label_of(t.object_id))[p], ref});
        }
        // group is already in stable-key order, so a stable sort on score
        // alone leaves ties in that order
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        std::vector<detail::TripletRef> kept;
        for (std::size_t i = 0; i < static_cast<std::size_t>(quota); ++i) kept.push_back(scored[i].second);
        return kept;
      });
}

inline Json provenance_to_json(const AdjustedDomain& dom) {
  const auto& vocab = dom.dataset.vocabulary;
  Json per = Json::array();
  for (const auto& q : dom.per_predicate) {
    Json j;
    j["label"] = vocab.predicate_label(q.predicate);
    j["common"] = q.common;
    j["available"] = q.available;
    j["kept"] = q.kept;
    j["dropped"] = q.dropped();
    per.push_back(std::move(j));
  }
  Json doc;
  doc["kind"] = "adjusted_domain_provenance";
  doc["strategy"] = to_string(dom.strategy);
  doc["M"] = dom.num_common;
  if (dom.quota == kUnlimitedQuota)
    doc["N"] = "unlimited";
  else
    doc["N"] = dom.quota;
  doc["seed"] = dom.seed ? Json(*dom.seed) : Json(nullptr);
  doc["triplets"] = dom.dataset.num_triplets();
  doc["per_predicate"] = std::move(per);
  return doc;
}

// ---------------------------------------------------------------------------
// Three-stage pipeline

struct PipelineConfig {
  std::optional<BalanceStrategy> strategy;           // none: no adjusted domain
  std::optional<TransitionSource> transition_source;  // none: no debiasing
  std::size_t num_common = 15;
  std::int64_t quota = 2000;
  double alpha = 1.0;
  double epsilon = 1.0;
  double ic_base = 2.0;
  std::uint64_t seed = 0;
  bool use_external_ic_for_partition = false;
};

struct PipelineResult {
  FrequencyModel original_model;
  InformationContentTable ic;
  std::optional<InformationContentTable> external_ic;
  PredicatePartition partition;
  std::optional<AdjustedDomain> adjusted;
  std::optional<FrequencyModel> refit_model;
  std::optional<ConfusionMatrix> confusion;
  std::optional<OverlapMatrix> overlap;
  std::optional<TransitionMatrix> transition;

  /// The model to score with: the refit when a domain was adjusted.
  const FrequencyModel& predictor() const { return refit_model ? *refit_model : original_model; }
  const TransitionMatrix* transition_or_null() const { return transition ? &*transition : nullptr; }
};

/// Stage 1 fits on the original domain; stage 2 builds the adjusted domain
/// (BLRA scores with the stage-1 model); stage 3 refits on it. The
/// transition matrix comes from the stage-1 confusion on the original domain
/// (cm, ccm) or from its context overlap (soo, sobg).
inline PipelineResult bpl_pipeline(const Dataset& train, const PipelineConfig& cfg,
                                   const InformationContentTable* external_ic = nullptr) {
  PipelineResult r{run_stage("fit-original", [&] { return FrequencyModel::fit(train, cfg.epsilon); }),
                   run_stage("ic", [&] { return compute_ic(train, cfg.ic_base); }),
                   std::nullopt, {}, {}, {}, {}, {}, {}};
  if (external_ic) r.external_ic = *external_ic;
  r.partition = run_stage("partition", [&] {
    if (cfg.use_external_ic_for_partition && !external_ic)
      throw ConfigError("partitioning by external IC requires an external frequency table");
    return partition_predicates(cfg.use_external_ic_for_partition ? *external_ic : r.ic, cfg.num_common);
  });

  if (cfg.strategy) {
    r.adjusted = run_stage("balance", [&] {
      return *cfg.strategy == BalanceStrategy::blru ? build_blru(train, r.partition, cfg.quota, cfg.seed)
                                                    : build_blra(train, r.partition, cfg.quota, r.original_model);
    });
    r.refit_model = run_stage("fit-refit", [&] { return FrequencyModel::fit(r.adjusted->dataset, cfg.epsilon); });
  }

  if (cfg.transition_source) {
    run_stage("transition", [&] {
      switch (*cfg.transition_source) {
        case TransitionSource::cm:
        case TransitionSource::ccm:
          r.confusion = build_confusion(r.original_model, train);
          break;
        case TransitionSource::soo:
        case TransitionSource::sobg:
          r.overlap = build_overlap(train);
          break;
        case TransitionSource::rm:
          break;
      }
      r.transition = build_transition(*cfg.transition_source, cfg.alpha, r.confusion ? &*r.confusion : nullptr,
                                      r.overlap ? &*r.overlap : nullptr, &r.partition);
    });
  }
  return r;
}

}  // namespace predbias
