#include "nscr/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nscr/error.hpp"
#include "nscr/kgraph.hpp"
#include "nscr/textio.hpp"

namespace nscr {

namespace {

void sort_unique(std::vector<std::string>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

} // namespace

void FeatureBundle::canonicalize() {
    sort_unique(detections);
    sort_unique(labels);
}

bool FeatureBundle::has_label(const std::string& name) const {
    return std::binary_search(labels.begin(), labels.end(), name);
}

bool FeatureBundle::has_detection(const std::string& name) const {
    return std::binary_search(detections.begin(), detections.end(), name);
}

std::string serialize_bundles(const std::vector<FeatureBundle>& bundles) {
    std::ostringstream out;
    out << "bundles v1\n";
    out << "count " << bundles.size() << "\n";
    for (const FeatureBundle& b : bundles) {
        out << "bundle " << b.id << "\n";
        out << "e_image";
        for (double v : b.e_image) out << " " << fmt_double(v);
        out << "\n";
        out << "detections";
        for (const auto& d : b.detections) out << " " << quote_name(d);
        out << "\n";
        out << "labels";
        for (const auto& l : b.labels) out << " " << quote_name(l);
        out << "\n";
        if (b.patches) {
            out << "patches " << b.patches->rows << " " << b.patches->cols << "\n";
            for (int i = 0; i < b.patches->rows; ++i) {
                out << "p";
                for (int j = 0; j < b.patches->cols; ++j)
                    out << " " << fmt_double(b.patches->at(i, j));
                out << "\n";
            }
        }
        out << "end\n";
    }
    return out.str();
}

std::vector<FeatureBundle> deserialize_bundles(const std::string& text) {
    std::vector<FeatureBundle> out;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    auto fail = [&](const std::string& msg) {
        throw DataError("bundle parse error at line " + std::to_string(line_no) + ": " + msg);
    };
    FeatureBundle cur;
    bool open = false;
    int patch_rows_left = 0;
    long long want_count = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto tok = tokenize_line(line);
        if (tok.empty()) continue;
        if (patch_rows_left > 0) {
            if (tok[0] != "p" || static_cast<int>(tok.size()) - 1 != cur.patches->cols)
                fail("bad patch row");
            const int r = cur.patches->rows - patch_rows_left;
            for (int j = 0; j < cur.patches->cols; ++j)
                cur.patches->at(r, j) = parse_double(tok[j + 1]);
            --patch_rows_left;
            continue;
        }
        if (tok[0] == "bundles") {
            if (tok.size() != 2 || tok[1] != "v1") fail("unsupported bundle file version");
        } else if (tok[0] == "count") {
            want_count = parse_int(tok[1]);
        } else if (tok[0] == "bundle") {
            if (open) fail("bundle without end");
            cur = FeatureBundle{};
            cur.id = static_cast<int>(parse_int(tok[1]));
            open = true;
        } else if (tok[0] == "e_image") {
            if (!open) fail("e_image outside bundle");
            cur.e_image.clear();
            for (std::size_t i = 1; i < tok.size(); ++i)
                cur.e_image.push_back(parse_double(tok[i]));
        } else if (tok[0] == "detections") {
            if (!open) fail("detections outside bundle");
            cur.detections.assign(tok.begin() + 1, tok.end());
        } else if (tok[0] == "labels") {
            if (!open) fail("labels outside bundle");
            cur.labels.assign(tok.begin() + 1, tok.end());
        } else if (tok[0] == "patches") {
            if (!open || tok.size() != 3) fail("bad patches record");
            const int r = static_cast<int>(parse_int(tok[1]));
            const int c = static_cast<int>(parse_int(tok[2]));
            cur.patches = Tensor2(r, c);
            patch_rows_left = r;
        } else if (tok[0] == "end") {
            if (!open) fail("end without bundle");
            cur.canonicalize();
            out.push_back(std::move(cur));
            open = false;
        } else {
            fail("unknown record '" + tok[0] + "'");
        }
    }
    if (open) throw DataError("bundle parse error: unterminated bundle");
    if (want_count >= 0 && want_count != static_cast<long long>(out.size()))
        throw DataError("bundle parse error: count mismatch");
    return out;
}

void save_bundles(const std::string& path, const std::vector<FeatureBundle>& bundles) {
    write_text_file(path, serialize_bundles(bundles));
}

std::vector<FeatureBundle> load_bundles(const std::string& path) {
    return deserialize_bundles(read_text_file(path));
}

void validate_bundles(const std::vector<FeatureBundle>& bundles, const KnowledgeGraph& g) {
    for (const FeatureBundle& b : bundles) {
        for (double v : b.e_image)
            if (!std::isfinite(v))
                throw DataError("bundle " + std::to_string(b.id) + ": non-finite e_image");
        if (b.patches && !b.patches->all_finite())
            throw DataError("bundle " + std::to_string(b.id) + ": non-finite patches");
        for (const auto& d : b.detections) {
            if (!b.has_label(d))
                throw DataError("bundle " + std::to_string(b.id) + ": detection '" + d +
                                "' missing from labels");
            if (g.node(g.id_of(d)).type != NodeType::Object)
                throw DataError("bundle " + std::to_string(b.id) + ": detection '" + d +
                                "' is not an object");
        }
        for (const auto& l : b.labels) {
            const int id = g.id_of(l);
            if (g.node(id).type == NodeType::Object) continue;
            bool implied = false;
            for (int src : g.neighbors(id, AdjMode::In)) {
                if (b.has_label(g.node(src).name)) {
                    implied = true;
                    break;
                }
            }
            if (!implied)
                throw DataError("bundle " + std::to_string(b.id) + ": label '" + l +
                                "' is not implied by any object label");
        }
    }
}

std::string serialize_embeddings(
    const std::vector<std::pair<std::string, std::vector<double>>>& rows) {
    std::ostringstream out;
    out << "embeddings v1\n";
    for (const auto& [name, vec] : rows) {
        out << quote_name(name);
        for (double v : vec) out << " " << fmt_double(v);
        out << "\n";
    }
    return out.str();
}

std::vector<std::pair<std::string, std::vector<double>>> deserialize_embeddings(
    const std::string& text) {
    std::vector<std::pair<std::string, std::vector<double>>> out;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto tok = tokenize_line(line);
        if (tok.empty()) continue;
        if (tok[0] == "embeddings") continue;
        std::vector<double> vec;
        for (std::size_t i = 1; i < tok.size(); ++i) vec.push_back(parse_double(tok[i]));
        if (vec.empty())
            throw DataError("embedding parse error at line " + std::to_string(line_no));
        out.emplace_back(tok[0], std::move(vec));
    }
    return out;
}

} // namespace nscr
