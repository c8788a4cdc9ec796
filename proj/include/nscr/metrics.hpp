#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nscr/kgraph.hpp"
#include "nscr/tensor.hpp"

namespace nscr {

// Average precision: mean of precision-at-rank over positive ranks, with
// score ties broken by ascending sample id. Undefined when no positives.
std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<int>& truths);

struct EvalReport {
    std::map<std::string, double> per_class_ap;
    std::vector<std::string> undefined_classes; // no positives; excluded from aggregates
    double mean_ap = 0.0;                       // flat mean over defined labels
    double macro_ap = 0.0;                      // per type-group means, then averaged
    std::map<int, double> top_k;                // per-image precision of top K, averaged
};

// scores/truths are images x concepts, column j = concept id j.
double mean_ap(const Tensor2& scores, const Tensor2& truths);
double macro_ap(const Tensor2& scores, const Tensor2& truths, const KnowledgeGraph& g);
// Missing slots count as wrong when an image offers fewer than K predictions.
double top_k(const Tensor2& scores, const Tensor2& truths, int k);

EvalReport evaluate(const Tensor2& scores, const Tensor2& truths, const KnowledgeGraph& g,
                    const std::vector<int>& k_list);

// Mean AP over a subset of concept columns (e.g. the novel classes).
double mean_ap_over(const Tensor2& scores, const Tensor2& truths, const std::vector<int>& columns);

// Macro AP restricted to a subset of columns: per type-group means over the
// subset, then averaged across non-empty groups.
double macro_ap_over(const Tensor2& scores, const Tensor2& truths, const KnowledgeGraph& g,
                     const std::vector<int>& columns);

} // namespace nscr
