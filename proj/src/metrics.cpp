#include "nscr/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "nscr/error.hpp"

namespace nscr {

std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<int>& truths) {
    if (scores.size() != truths.size()) throw DimensionError("average_precision length mismatch");
    const int n = static_cast<int>(scores.size());
    int positives = 0;
    for (int t : truths) positives += t != 0;
    if (positives == 0) return std::nullopt;
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    double sum = 0.0;
    int hits = 0;
    for (int rank = 0; rank < n; ++rank) {
        if (truths[order[rank]] != 0) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
        }
    }
    return sum / positives;
}

namespace {

std::vector<double> column(const Tensor2& m, int c) {
    std::vector<double> out(static_cast<std::size_t>(m.rows));
    for (int i = 0; i < m.rows; ++i) out[static_cast<std::size_t>(i)] = m.at(i, c);
    return out;
}

std::vector<int> column_int(const Tensor2& m, int c) {
    std::vector<int> out(static_cast<std::size_t>(m.rows));
    for (int i = 0; i < m.rows; ++i) out[static_cast<std::size_t>(i)] = m.at(i, c) != 0.0;
    return out;
}

} // namespace

double mean_ap(const Tensor2& scores, const Tensor2& truths) {
    if (!scores.same_shape(truths)) throw DimensionError("scores/truths shape mismatch");
    double sum = 0.0;
    int defined = 0;
    for (int c = 0; c < scores.cols; ++c) {
        const auto ap = average_precision(column(scores, c), column_int(truths, c));
        if (ap) {
            sum += *ap;
            ++defined;
        }
    }
    return defined == 0 ? 0.0 : sum / defined;
}

double macro_ap(const Tensor2& scores, const Tensor2& truths, const KnowledgeGraph& g) {
    if (!scores.same_shape(truths)) throw DimensionError("scores/truths shape mismatch");
    if (scores.cols != g.node_count()) throw DimensionError("metric columns must match graph");
    double group_sum = 0.0;
    int groups = 0;
    for (NodeType t : {NodeType::Object, NodeType::Attribute, NodeType::Affordance}) {
        double sum = 0.0;
        int defined = 0;
        for (int c = 0; c < scores.cols; ++c) {
            if (g.node(c).type != t) continue;
            const auto ap = average_precision(column(scores, c), column_int(truths, c));
            if (ap) {
                sum += *ap;
                ++defined;
            }
        }
        if (defined > 0) {
            group_sum += sum / defined;
            ++groups;
        }
    }
    return groups == 0 ? 0.0 : group_sum / groups;
}

double top_k(const Tensor2& scores, const Tensor2& truths, int k) {
    if (!scores.same_shape(truths)) throw DimensionError("scores/truths shape mismatch");
    if (k < 1) throw ConfigError("top_k needs k >= 1");
    if (scores.rows == 0) return 0.0;
    double total = 0.0;
    for (int i = 0; i < scores.rows; ++i) {
        std::vector<int> order(static_cast<std::size_t>(scores.cols));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            if (scores.at(i, a) != scores.at(i, b)) return scores.at(i, a) > scores.at(i, b);
            return a < b;
        });
        int correct = 0;
        const int take = std::min(k, scores.cols);
        for (int r = 0; r < take; ++r) correct += truths.at(i, order[r]) != 0.0;
        total += static_cast<double>(correct) / static_cast<double>(k);
    }
    return total / scores.rows;
}

EvalReport evaluate(const Tensor2& scores, const Tensor2& truths, const KnowledgeGraph& g,
                    const std::vector<int>& k_list) {
    EvalReport report;
    for (int c = 0; c < scores.cols; ++c) {
        const auto ap = average_precision(column(scores, c), column_int(truths, c));
        if (ap)
            report.per_class_ap[g.node(c).name] = *ap;
        else
            report.undefined_classes.push_back(g.node(c).name);
    }
    report.mean_ap = mean_ap(scores, truths);
    report.macro_ap = macro_ap(scores, truths, g);
    for (int k : k_list) report.top_k[k] = top_k(scores, truths, k);
    return report;
}

double mean_ap_over(const Tensor2& scores, const Tensor2& truths, const std::vector<int>& columns) {
    double sum = 0.0;
    int defined = 0;
    for (int c : columns) {
        const auto ap = average_precision(column(scores, c), column_int(truths, c));
        if (ap) {
            sum += *ap;
            ++defined;
        }
    }
    return defined == 0 ? 0.0 : sum / defined;
}

double macro_ap_over(const Tensor2& scores, const Tensor2& truths, const KnowledgeGraph& g,
                     const std::vector<int>& columns) {
    double group_sum = 0.0;
    int groups = 0;
    for (NodeType t : {NodeType::Object, NodeType::Attribute, NodeType::Affordance}) {
        double sum = 0.0;
        int defined = 0;
        for (int c : columns) {
            if (g.node(c).type != t) continue;
            const auto ap = average_precision(column(scores, c), column_int(truths, c));
            if (ap) {
                sum += *ap;
                ++defined;
            }
        }
        if (defined > 0) {
            group_sum += sum / defined;
            ++groups;
        }
    }
    return groups == 0 ? 0.0 : group_sum / groups;
}

} // namespace nscr
