#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nscr/tensor.hpp"

namespace nscr {

class KnowledgeGraph;

// Stand-in for one image: global embedding, detector output, optional patch
// matrix, and ground-truth labels.
struct FeatureBundle {
    int id = -1;
    std::vector<double> e_image;
    std::vector<std::string> detections; // sorted, unique
    std::vector<std::string> labels;     // sorted, unique
    std::optional<Tensor2> patches;

    void canonicalize();
    bool has_label(const std::string& name) const;
    bool has_detection(const std::string& name) const;
};

std::string serialize_bundles(const std::vector<FeatureBundle>& bundles);
std::vector<FeatureBundle> deserialize_bundles(const std::string& text);
void save_bundles(const std::string& path, const std::vector<FeatureBundle>& bundles);
std::vector<FeatureBundle> load_bundles(const std::string& path);

// Load-time sanity: finite values, detections subset of labels, and every
// non-object label implied by some object label via a graph edge.
void validate_bundles(const std::vector<FeatureBundle>& bundles, const KnowledgeGraph& g);

// Embedding table: name -> fixed-width vector.
std::string serialize_embeddings(const std::vector<std::pair<std::string, std::vector<double>>>& rows);
std::vector<std::pair<std::string, std::vector<double>>> deserialize_embeddings(const std::string& text);

} // namespace nscr
