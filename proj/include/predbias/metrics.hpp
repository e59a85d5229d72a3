#pragma once

// PredCls evaluation: per-image triplet ranking, R@K, per-predicate recall,
// mR@K, and information-content-weighted mean recall (mRIC@K).

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "predbias/dataset.hpp"
#include "predbias/error.hpp"
#include "predbias/freq_model.hpp"
#include "predbias/information_content.hpp"
#include "predbias/io.hpp"
#include "predbias/semantic_debias.hpp"

namespace predbias {

struct RankedEntry {
  InstanceId subject_id = 0;
  InstanceId object_id = 0;
  LabelIndex predicate = 0;
  double score = 0;
  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

struct RankedPrediction {
  std::string image_id;
  std::vector<RankedEntry> entries;  // score descending
  friend bool operator==(const RankedPrediction&, const RankedPrediction&) = default;
};

struct RankOptions {
  bool all_pairs = false;         // score every ordered pair, not just annotated ones
  bool graph_constraint = true;   // one predicate per pair
};

/// Higher score first; ties by (subject_id, object_id, predicate) ascending.
inline bool ranks_before(const RankedEntry& a, const RankedEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  return std::tie(a.subject_id, a.object_id, a.predicate) < std::tie(b.subject_id, b.object_id, b.predicate);
}

inline std::vector<std::pair<InstanceId, InstanceId>> candidate_pairs(const ImageRecord& img, bool all_pairs) {
  std::vector<std::pair<InstanceId, InstanceId>> pairs;
  if (all_pairs) {
    for (const auto& s : img.objects)
      for (const auto& o : img.objects)
        if (s.instance_id != o.instance_id) pairs.emplace_back(s.instance_id, o.instance_id);
  } else {
    std::set<std::pair<InstanceId, InstanceId>> seen;
    for (const auto& t : img.triplets)
      if (seen.emplace(t.subject_id, t.object_id).second) pairs.emplace_back(t.subject_id, t.object_id);
  }
  return pairs;
}

inline RankedPrediction rank_predcls(const FrequencyModel& model, const TransitionMatrix* tm, const ImageRecord& img,
                                     const RankOptions& opts = {}) {
  RankedPrediction rp{img.image_id, {}};
  for (const auto& [subj, obj] : candidate_pairs(img, opts.all_pairs)) {
    const auto scores = debiased_scores(model, tm, img.label_of(subj), img.label_of(obj));
    if (opts.graph_constraint) {
      const auto best = argmax(scores.values());
      rp.entries.push_back({subj, obj, static_cast<LabelIndex>(best), scores[best]});
    } else {
      for (std::size_t k = 0; k < scores.size(); ++k)
        rp.entries.push_back({subj, obj, static_cast<LabelIndex>(k), scores[k]});
    }
  }
  std::sort(rp.entries.begin(), rp.entries.end(), ranks_before);
  return rp;
}

struct RecallCount {
  std::int64_t hits = 0;
  std::int64_t total = 0;
  friend bool operator==(const RecallCount&, const RecallCount&) = default;
};

/// Per-image hit tallies at one K, split by ground-truth predicate.
struct ImageRecall {
  std::int64_t hits = 0;
  std::int64_t total = 0;
  std::vector<std::int64_t> hits_by_predicate;
  std::vector<std::int64_t> total_by_predicate;
};

/// GT triplets matched exactly by one of the top-k entries.
inline ImageRecall image_recall(const RankedPrediction& rp, const ImageRecord& gt, std::size_t k,
                                std::size_t num_predicates) {
  if (rp.image_id != gt.image_id)
    throw ValidationError(ValidationErrc::invalid_value,
                          "ranking for image '" + rp.image_id + "' scored against '" + gt.image_id + "'");
  ImageRecall r;
  r.hits_by_predicate.assign(num_predicates, 0);
  r.total_by_predicate.assign(num_predicates, 0);
  std::set<std::tuple<InstanceId, LabelIndex, InstanceId>> top;
  for (std::size_t i = 0; i < std::min(k, rp.entries.size()); ++i) {
    const auto& e = rp.entries[i];
    top.emplace(e.subject_id, e.predicate, e.object_id);
  }
  for (const auto& t : gt.triplets) {
    ++r.total;
    ++r.total_by_predicate.at(t.predicate_index);
    if (top.contains({t.subject_id, t.predicate_index, t.object_id})) {
      ++r.hits;
      ++r.hits_by_predicate[t.predicate_index];
    }
  }
  return r;
}

inline RecallCount recall_at_k(const RankedPrediction& rp, const ImageRecord& gt, std::size_t k) {
  std::size_t max_pred = 0;
  for (const auto& t : gt.triplets) max_pred = std::max<std::size_t>(max_pred, t.predicate_index + 1);
  for (const auto& e : rp.entries) max_pred = std::max<std::size_t>(max_pred, e.predicate + 1);
  const auto r = image_recall(rp, gt, k, max_pred);
  return {r.hits, r.total};
}

enum class RecallAveraging {
  per_image,  // mean over images of hits/total
  pooled,     // total hits / total GT
};

inline std::string_view to_string(RecallAveraging a) { return a == RecallAveraging::per_image ? "per_image" : "pooled"; }

struct RecallSummary {
  std::size_t k = 0;
  double r_at_k = 0;
  double mr_at_k = 0;
  std::vector<std::int64_t> hits;       // per predicate
  std::vector<std::int64_t> gt_counts;  // per predicate
  std::size_t images_counted = 0;

  bool has_gt(std::size_t p) const { return gt_counts[p] > 0; }
  double recall(std::size_t p) const {
    return gt_counts[p] == 0 ? 0.0 : static_cast<double>(hits[p]) / static_cast<double>(gt_counts[p]);
  }
};

/// Aggregates integer tallies; divisions happen once at the end so any
/// evaluation order gives the same result.
inline RecallSummary mean_recall_at_k(std::span<const ImageRecall> per_image, std::size_t k, std::size_t num_predicates,
                                      RecallAveraging averaging = RecallAveraging::per_image) {
  RecallSummary s;
  s.k = k;
  s.hits.assign(num_predicates, 0);
  s.gt_counts.assign(num_predicates, 0);
  double image_recall_sum = 0;
  std::int64_t hits = 0;
  std::int64_t total = 0;
  for (const auto& r : per_image) {
    for (std::size_t p = 0; p < num_predicates; ++p) {
      s.hits[p] += r.hits_by_predicate.at(p);
      s.gt_counts[p] += r.total_by_predicate.at(p);
    }
    hits += r.hits;
    total += r.total;
    if (r.total > 0) {
      image_recall_sum += static_cast<double>(r.hits) / static_cast<double>(r.total);
      ++s.images_counted;
    }
  }
  if (total == 0) throw ValidationError(ValidationErrc::empty_dataset, "test set has no ground-truth triplets");
  s.r_at_k = averaging == RecallAveraging::per_image ? image_recall_sum / static_cast<double>(s.images_counted)
                                                     : static_cast<double>(hits) / static_cast<double>(total);
  double acc = 0;
  std::size_t present = 0;
  for (std::size_t p = 0; p < num_predicates; ++p) {
    if (!s.has_gt(p)) continue;
    acc += s.recall(p);
    ++present;
  }
  s.mr_at_k = acc / static_cast<double>(present);
  return s;
}

/// Mean over predicates with ground truth of recall[k] * ic[k].
inline double mric_at_k(const RecallSummary& s, const InformationContentTable& ic) {
  if (ic.size() != s.gt_counts.size())
    throw ValidationError(ValidationErrc::vocabulary_mismatch, "ic table covers a different predicate count");
  double acc = 0;
  std::size_t present = 0;
  for (std::size_t p = 0; p < s.gt_counts.size(); ++p) {
    if (!s.has_gt(p)) continue;
    acc += s.recall(p) * ic.ic[p];
    ++present;
  }
  return present == 0 ? 0.0 : acc / static_cast<double>(present);
}

struct EvalOptions {
  std::vector<std::size_t> ks{20, 50, 100};
  RankOptions rank;
  RecallAveraging averaging = RecallAveraging::per_image;
  unsigned threads = 1;
};

struct KMetrics {
  RecallSummary recall;
  std::optional<double> mric_dataset;
  std::optional<double> mric_external;
};

struct EvaluationReport {
  std::vector<KMetrics> per_k;
  ConfusionMatrix confusion;
  std::size_t num_images = 0;
  std::size_t num_triplets = 0;

  const KMetrics& at(std::size_t k) const {
    for (const auto& m : per_k)
      if (m.recall.k == k) return m;
    throw ConfigError("report has no metrics for K=" + std::to_string(k));
  }
};

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

inline EvaluationReport evaluate(const FrequencyModel& model, const TransitionMatrix* tm, const Dataset& test,
                                 const EvalOptions& opts, const InformationContentTable* ic_dataset = nullptr,
                                 const InformationContentTable* ic_external = nullptr) {
  require_same_vocabulary(model.vocabulary(), test.vocabulary, "evaluate");
  const auto k_preds = model.num_predicates();
  if (tm && tm->size() != k_preds)
    throw ValidationError(ValidationErrc::dimension_mismatch, "transition size differs from predicate count");
  if (opts.ks.empty()) throw ConfigError("at least one K is required");

  // [image][k index]
  std::vector<std::vector<ImageRecall>> recalls(test.images.size());
  parallel_for(test.images.size(), opts.threads, [&](std::size_t i) {
    const auto& img = test.images[i];
    const auto rp = rank_predcls(model, tm, img, opts.rank);
    recalls[i].reserve(opts.ks.size());
    for (auto k : opts.ks) recalls[i].push_back(image_recall(rp, img, k, k_preds));
  });

  EvaluationReport report;
  report.num_images = test.images.size();
  report.num_triplets = test.num_triplets();
  for (std::size_t ki = 0; ki < opts.ks.size(); ++ki) {
    std::vector<ImageRecall> column;
    column.reserve(recalls.size());
    for (auto& r : recalls) column.push_back(r[ki]);
    KMetrics m{mean_recall_at_k(column, opts.ks[ki], k_preds, opts.averaging), std::nullopt, std::nullopt};
    if (ic_dataset) m.mric_dataset = mric_at_k(m.recall, *ic_dataset);
    if (ic_external) m.mric_external = mric_at_k(m.recall, *ic_external);
    report.per_k.push_back(std::move(m));
  }
  report.confusion = build_confusion(model, test, tm);
  return report;
}

/// Confusion over ds with debiased argmax, plus its row-normalized heatmap
/// with both axes in increasing-IC order.
struct ConfusionReport {
  ConfusionMatrix confusion;
  std::vector<HeatmapCell> heatmap;
};

inline ConfusionReport confusion_report(const FrequencyModel& model, const TransitionMatrix* tm, const Dataset& ds,
                                        const InformationContentTable& ic) {
  ConfusionReport out{build_confusion(model, ds, tm), {}};
  const auto order = ic.order_by_increasing_ic();
  out.heatmap = heatmap_triples(row_normalize(out.confusion), ds.vocabulary, order);
  return out;
}

inline Json report_to_json(const EvaluationReport& report, const Vocabulary& vocab) {
  Json metrics = Json::array();
  for (const auto& m : report.per_k) {
    Json per = Json::array();
    for (std::size_t p = 0; p < vocab.num_predicates(); ++p) {
      Json row;
      row["label"] = vocab.predicate_label(static_cast<LabelIndex>(p));
      row["gt_count"] = m.recall.gt_counts[p];
      row["hits"] = m.recall.hits[p];
      row["recall"] = m.recall.has_gt(p) ? Json(m.recall.recall(p)) : Json(nullptr);
      per.push_back(std::move(row));
    }
    Json j;
    j["k"] = m.recall.k;
    j["r_at_k"] = m.recall.r_at_k;
    j["mr_at_k"] = m.recall.mr_at_k;
    Json mric = Json::object();
    if (m.mric_dataset) mric["dataset"] = *m.mric_dataset;
    if (m.mric_external) mric["external"] = *m.mric_external;
    j["mric_at_k"] = std::move(mric);
    j["per_predicate"] = std::move(per);
    metrics.push_back(std::move(j));
  }
  Json doc;
  doc["kind"] = "evaluation_report";
  doc["num_images"] = report.num_images;
  doc["num_triplets"] = report.num_triplets;
  doc["metrics"] = std::move(metrics);
  doc["confusion"] = report.confusion.cells.to_rows();
  doc["trace_fraction"] = report.confusion.normalized_trace_fraction();
  doc["raw_trace_fraction"] = report.confusion.raw_trace_fraction();
  return doc;
}

/// Fixed-width table: one row per model, R@K columns then mR@K then mRIC@K.
inline std::string format_summary_table(const std::vector<std::pair<std::string, const EvaluationReport*>>& rows) {
  std::string out;
  if (rows.empty()) return out;
  const auto& ks = rows.front().second->per_k;
  char buf[64];
  out += "Model                         ";
  for (const char* name : {"R", "mR", "mRIC"})
    for (const auto& m : ks) {
      std::snprintf(buf, sizeof buf, " %6s@%-4zu", name, m.recall.k);
      out += buf;
    }
  out += '\n';
  for (const auto& [label, report] : rows) {
    std::snprintf(buf, sizeof buf, "%-30.30s", label.c_str());
    out += buf;
    for (const auto& m : report->per_k) {
      std::snprintf(buf, sizeof buf, " %11.2f", 100.0 * m.recall.r_at_k);
      out += buf;
    }
    for (const auto& m : report->per_k) {
      std::snprintf(buf, sizeof buf, " %11.2f", 100.0 * m.recall.mr_at_k);
      out += buf;
    }
    for (const auto& m : report->per_k) {
      if (m.mric_dataset)
        std::snprintf(buf, sizeof buf, " %11.3f", *m.mric_dataset);
      else
        std::snprintf(buf, sizeof buf, " %11s", "-");
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace predbias
