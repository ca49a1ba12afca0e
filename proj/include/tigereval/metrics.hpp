// Copyright 2026 The tigereval Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "tigereval/annotations.hpp"
#include "tigereval/box.hpp"
#include "tigereval/error.hpp"

namespace tigereval {

/// Whether a detection counts as correct at IoU exactly equal to the threshold.
enum class ThresholdRule {
    kStrict,     // IoU > t
    kNonStrict,  // IoU >= t
};

inline std::string to_string(ThresholdRule r) { return r == ThresholdRule::kStrict ? "strict" : "non-strict"; }

inline ThresholdRule parse_threshold_rule(const std::string& s) {
    if (s == "strict") return ThresholdRule::kStrict;
    if (s == "non-strict") return ThresholdRule::kNonStrict;
    throw ConfigError("unknown threshold rule '" + s + "' (expected strict|non-strict)");
}

inline bool is_correct(double iou_value, double t, ThresholdRule rule = ThresholdRule::kStrict) {
    return rule == ThresholdRule::kStrict ? iou_value > t : iou_value >= t;
}

inline bool is_correct(const BoundingBox& p, const BoundingBox& g, double t,
                       ThresholdRule rule = ThresholdRule::kStrict) {
    return is_correct(iou(p, g), t, rule);
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
inline std::vector<double> coco_thresholds() {
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
    return t;
}

// ---------------------------------------------------------------------------
// Matching
// ---------------------------------------------------------------------------

/// Verdict for one detection. `ignored` marks a detection matched to a
/// difficult ground truth; it is neither a true nor a false positive.
struct DetectionVerdict {
    double score = 0.0;
    bool is_true_positive = false;
    bool ignored = false;
    std::optional<std::size_t> matched_gt;
};

struct MatchFlags {
    std::vector<DetectionVerdict> verdicts;  // in input (score-descending) order
    std::size_t gt_total = 0;                // non-ignored ground truths

    std::size_t true_positives() const {
        return static_cast<std::size_t>(
            std::count_if(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.is_true_positive; }));
    }
    std::size_t false_positives() const {
        return static_cast<std::size_t>(std::count_if(verdicts.begin(), verdicts.end(), [](const auto& v) {
            return !v.is_true_positive && !v.ignored;
        }));
    }
};

struct MatchOptions {
    ThresholdRule rule = ThresholdRule::kStrict;
    bool ignore_difficult = true;
};

/// Greedy matching for one image. Detections must already be in canonical
/// order. Each detection takes the unmatched same-class ground truth of
/// highest IoU (lowest index on ties) if that pair is correct; otherwise it is
/// a false positive. When `ignore_difficult` is set, difficult ground truths
/// are left out of gt_total and are only considered after the regular ones;
/// a detection landing on one is ignored.
inline MatchFlags match_detections(std::span<const Detection> dets, std::span<const GroundTruthObject> gts,
                                   double t, const MatchOptions& opt = {}) {
    MatchFlags flags;
    std::vector<bool> used(gts.size(), false);
    for (const auto& g : gts) {
        if (!(opt.ignore_difficult && g.difficult)) ++flags.gt_total;
    }
    const auto best_unmatched = [&](const Detection& d, bool difficult_pass) {
        std::optional<std::size_t> best;
        double best_iou = -1.0;
        for (std::size_t j = 0; j < gts.size(); ++j) {
            if (used[j] || gts[j].class_id != d.class_id) continue;
            if (opt.ignore_difficult && gts[j].difficult != difficult_pass) continue;
            const double v = iou(d.box, gts[j].box);
            if (v > best_iou) {
                best_iou = v;
                best = j;
            }
        }
        if (best && is_correct(best_iou, t, opt.rule)) return best;
        return std::optional<std::size_t>{};
    };
    for (const auto& d : dets) {
        DetectionVerdict v;
        v.score = d.score;
        if (auto j = best_unmatched(d, false)) {
            v.is_true_positive = true;
            v.matched_gt = j;
            used[*j] = true;
        } else if (opt.ignore_difficult) {
            if (auto k = best_unmatched(d, true)) {
                v.ignored = true;
                v.matched_gt = k;
                used[*k] = true;
            }
        }
        flags.verdicts.push_back(v);
    }
    return flags;
}

/// Convenience overload for plain boxes of a single class.
inline MatchFlags match_detections(std::span<const Detection> dets, std::span<const BoundingBox> gts, double t,
                                   ThresholdRule rule = ThresholdRule::kStrict) {
    std::vector<GroundTruthObject> objs;
    objs.reserve(gts.size());
    for (const auto& b : gts) objs.push_back({b, 0, false});
    std::vector<Detection> single(dets.begin(), dets.end());
    for (auto& d : single) d.class_id = 0;
    return match_detections(single, objs, t, MatchOptions{rule, false});
}

// ---------------------------------------------------------------------------
// Precision/recall and AP
// ---------------------------------------------------------------------------

struct PrPoint {
    double recall = 0.0;
    double precision = 0.0;
    double score_cut = 0.0;

    friend bool operator==(const PrPoint&, const PrPoint&) = default;
};

struct ScoredFlag {
    double score = 0.0;
    bool is_true_positive = false;
};

/// Cumulative walk over score-sorted verdicts: one point per detection.
/// Empty when gt_total is 0.
inline std::vector<PrPoint> pr_curve(std::span<const ScoredFlag> flags, std::size_t gt_total) {
    std::vector<PrPoint> curve;
    if (gt_total == 0) return curve;
    std::size_t tp = 0;
    std::size_t fp = 0;
    curve.reserve(flags.size());
    for (const auto& f : flags) {
        (f.is_true_positive ? tp : fp) += 1;
        curve.push_back({static_cast<double>(tp) / static_cast<double>(gt_total),
                         static_cast<double>(tp) / static_cast<double>(tp + fp), f.score});
    }
    return curve;
}

/// All-point interpolated AP: the precision envelope (running maximum from
/// the right) summed over recall increments. 0 for an empty curve.
inline double average_precision(std::span<const PrPoint> curve) {
    std::vector<double> envelope(curve.size());
    double running = 0.0;
    for (std::size_t i = curve.size(); i-- > 0;) {
        running = std::max(running, curve[i].precision);
        envelope[i] = running;
    }
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < curve.size(); ++i) {
        ap += (curve[i].recall - prev_recall) * envelope[i];
        prev_recall = curve[i].recall;
    }
    return std::clamp(ap, 0.0, 1.0);
}

/// Arithmetic mean of per-class APs.
inline double mean_average_precision(std::span<const double> aps) {
    if (aps.empty()) throw std::invalid_argument("mean_average_precision: empty AP list");
    double sum = 0.0;
    for (double a : aps) sum += a;
    return sum / static_cast<double>(aps.size());
}

inline double mean_average_precision(std::initializer_list<double> aps) {
    return mean_average_precision(std::span<const double>(aps.begin(), aps.size()));
}

// ---------------------------------------------------------------------------
// Dataset evaluation
// ---------------------------------------------------------------------------

struct EvalOptions {
    std::vector<double> thresholds = coco_thresholds();
    ThresholdRule rule = ThresholdRule::kStrict;
    bool ignore_difficult = true;
    ClassTable classes = ClassTable::tiger();

    void validate() const {
        if (thresholds.empty()) throw ConfigError("at least one IoU threshold is required");
        for (std::size_t i = 0; i < thresholds.size(); ++i) {
            if (!(thresholds[i] >= 0.0 && thresholds[i] < 1.0)) {
                throw ConfigError(fmt::format("IoU threshold {} is outside [0,1)", thresholds[i]));
            }
            if (i > 0 && !(thresholds[i] > thresholds[i - 1])) {
                throw ConfigError("IoU thresholds must be strictly increasing");
            }
        }
    }
};

struct ClassResult {
    int class_id = 0;
    std::size_t gt_total = 0;
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    double ap = 0.0;
    std::vector<PrPoint> curve;
};

struct ThresholdResult {
    double threshold = 0.0;
    std::vector<ClassResult> classes;  // ascending class id
    double map = 0.0;                  // mean over classes
};

struct EvalReport {
    EvalOptions options;
    std::vector<ThresholdResult> per_threshold;  // same order as options.thresholds
    double map_single = 0.0;  // mAP at 0.50 (or the first threshold when 0.50 is not evaluated)
    double map_single_threshold = 0.0;
    double map_coco = 0.0;  // mean of per-threshold mAP
    std::size_t image_count = 0;
    std::size_t detection_count = 0;
    std::vector<std::string> warnings;

    /// AP per threshold for one class.
    std::map<double, double> per_threshold_ap(int class_id = 0) const {
        std::map<double, double> out;
        for (const auto& t : per_threshold) {
            for (const auto& c : t.classes) {
                if (c.class_id == class_id) out[t.threshold] = c.ap;
            }
        }
        return out;
    }
};

/// Evaluates predictions against ground truth at every configured threshold.
/// Predictions for images absent from `gts` are rejected; images without
/// predictions still contribute their ground truth to recall.
inline EvalReport evaluate(const PredictionSet& preds, const GroundTruthSet& gts, const EvalOptions& options = {}) {
    options.validate();
    for (const auto& [id, dets] : preds) {
        if (!gts.count(id)) throw DataError("predictions reference unknown image id '" + id + "'");
    }

    std::set<int> class_ids;
    for (int id : options.classes.ids()) class_ids.insert(id);
    for (const auto& [id, image] : gts) {
        for (const auto& o : image.objects) class_ids.insert(o.class_id);
    }
    for (const auto& [id, dets] : preds) {
        for (const auto& d : dets) class_ids.insert(d.class_id);
    }

    EvalReport report;
    report.options = options;
    report.image_count = gts.size();

    // Canonically ordered detections per image.
    std::map<std::string, std::vector<Detection>> sorted;
    for (const auto& [id, dets] : preds) {
        auto& s = sorted[id];
        s = dets;
        std::sort(s.begin(), s.end(), detection_before);
        report.detection_count += s.size();
    }

    struct Entry {
        double score;
        const std::string* image_id;
        BoundingBox box;
        bool tp;
    };

    for (double t : options.thresholds) {
        ThresholdResult tr;
        tr.threshold = t;
        for (int cls : class_ids) {
            ClassResult cr;
            cr.class_id = cls;
            std::vector<Entry> entries;
            for (const auto& [id, image] : gts) {
                std::vector<GroundTruthObject> g;
                for (const auto& o : image.objects) {
                    if (o.class_id == cls) g.push_back(o);
                }
                std::vector<Detection> d;
                if (const auto it = sorted.find(id); it != sorted.end()) {
                    for (const auto& det : it->second) {
                        if (det.class_id == cls) d.push_back(det);
                    }
                }
                const MatchFlags flags =
                    match_detections(d, g, t, MatchOptions{options.rule, options.ignore_difficult});
                cr.gt_total += flags.gt_total;
                for (std::size_t k = 0; k < d.size(); ++k) {
                    const auto& v = flags.verdicts[k];
                    if (v.ignored) continue;
                    entries.push_back({d[k].score, &id, d[k].box, v.is_true_positive});
                }
            }
            std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
                if (a.score != b.score) return a.score > b.score;
                if (*a.image_id != *b.image_id) return *a.image_id < *b.image_id;
                return box_less(a.box, b.box);
            });
            std::vector<ScoredFlag> flags;
            flags.reserve(entries.size());
            for (const auto& e : entries) {
                flags.push_back({e.score, e.tp});
                (e.tp ? cr.true_positives : cr.false_positives) += 1;
            }
            cr.curve = pr_curve(flags, cr.gt_total);
            cr.ap = average_precision(cr.curve);
            if (cr.gt_total == 0 && t == options.thresholds.front()) {
                report.warnings.push_back(fmt::format("class '{}' has no ground truth; its AP is defined as 0",
                                                      options.classes.name_of(cls)));
            }
            tr.classes.push_back(std::move(cr));
        }
        std::vector<double> aps;
        for (const auto& c : tr.classes) aps.push_back(c.ap);
        tr.map = mean_average_precision(aps);
        report.per_threshold.push_back(std::move(tr));
    }

    double sum = 0.0;
    for (const auto& tr : report.per_threshold) sum += tr.map;
    report.map_coco = sum / static_cast<double>(report.per_threshold.size());

    report.map_single = report.per_threshold.front().map;
    report.map_single_threshold = report.per_threshold.front().threshold;
    for (const auto& tr : report.per_threshold) {
        if (tr.threshold == 0.5) {
            report.map_single = tr.map;
            report.map_single_threshold = tr.threshold;
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

/// Key-value header followed by per-threshold tables.
inline void write_report_text(std::ostream& out, const EvalReport& r) {
    const auto& o = r.options;
    std::string thresholds;
    for (double t : o.thresholds) thresholds += (thresholds.empty() ? "" : ",") + fmt::format("{:.2f}", t);
    out << "# tigereval evaluation report\n";
    out << fmt::format("map_coco = {:.6f}\n", r.map_coco);
    out << fmt::format("map_single = {:.6f}\n", r.map_single);
    out << fmt::format("map_single_threshold = {:.2f}\n", r.map_single_threshold);
    out << "thresholds = " << thresholds << '\n';
    out << "threshold_rule = " << to_string(o.rule) << '\n';
    out << "ignore_difficult = " << (o.ignore_difficult ? "true" : "false") << '\n';
    out << "classes = " << o.classes.to_string() << '\n';
    out << "images = " << r.image_count << '\n';
    out << "detections = " << r.detection_count << '\n';
    out << "warnings = " << r.warnings.size() << '\n';
    for (const auto& w : r.warnings) out << "warning = " << w << '\n';
    out << '\n';
    out << fmt::format("{:<10} {:<16} {:>8} {:>8} {:>8} {:>10}\n", "threshold", "class", "gt", "tp", "fp", "ap");
    for (const auto& tr : r.per_threshold) {
        for (const auto& c : tr.classes) {
            out << fmt::format("{:<10.2f} {:<16} {:>8} {:>8} {:>8} {:>10.6f}\n", tr.threshold,
                               o.classes.name_of(c.class_id), c.gt_total, c.true_positives, c.false_positives, c.ap);
        }
    }
    out << '\n';
    out << fmt::format("{:<10} {:>10}\n", "threshold", "mAP");
    for (const auto& tr : r.per_threshold) out << fmt::format("{:<10.2f} {:>10.6f}\n", tr.threshold, tr.map);
}

/// One row per threshold per class.
inline void write_report_csv(std::ostream& out, const EvalReport& r) {
    out << "threshold,class_id,class_name,gt_total,true_positives,false_positives,ap,map\n";
    for (const auto& tr : r.per_threshold) {
        for (const auto& c : tr.classes) {
            out << fmt::format("{:.2f},{},{},{},{},{},{},{}\n", tr.threshold, c.class_id,
                               r.options.classes.name_of(c.class_id), c.gt_total, c.true_positives,
                               c.false_positives, c.ap, tr.map);
        }
    }
}

inline void write_pr_curve_csv(std::ostream& out, std::span<const PrPoint> curve) {
    out << "score_cut,recall,precision\n";
    for (const auto& p : curve) out << fmt::format("{},{},{}\n", p.score_cut, p.recall, p.precision);
}

/// Writes report.txt, report.csv and pr/pr_t<thr>_c<class>.csv under `dir`.
inline void write_report_files(const std::filesystem::path& dir, const EvalReport& r) {
    std::filesystem::create_directories(dir / "pr");
    const auto open = [](const std::filesystem::path& p) {
        std::ofstream f(p, std::ios::trunc);
        if (!f) throw DataError("cannot write " + p.string());
        return f;
    };
    {
        auto f = open(dir / "report.txt");
        write_report_text(f, r);
    }
    {
        auto f = open(dir / "report.csv");
        write_report_csv(f, r);
    }
    for (const auto& tr : r.per_threshold) {
        for (const auto& c : tr.classes) {
            auto f = open(dir / "pr" / fmt::format("pr_t{:.2f}_c{}.csv", tr.threshold, c.class_id));
            write_pr_curve_csv(f, c.curve);
        }
    }
}

}  // namespace tigereval
