// Copyright 2026 The tigereval Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "tigereval/box.hpp"
#include "tigereval/error.hpp"
#include "tigereval/kvfile.hpp"

namespace tigereval {

/// Bidirectional class name <-> id table.
class ClassTable {
public:
    ClassTable() = default;

    /// The single-class table {tiger: 0}.
    static ClassTable tiger() {
        ClassTable t;
        t.add("tiger", 0);
        return t;
    }

    /// Parses "name:id[,name:id...]".
    static ClassTable parse(const std::string& spec) {
        ClassTable t;
        std::stringstream ss(spec);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            const auto colon = item.rfind(':');
            const auto id = colon == std::string::npos ? std::nullopt : parse_int(item.substr(colon + 1));
            if (!id || *id < 0) throw ConfigError("bad class table entry '" + item + "' (expected name:id)");
            t.add(trim(item.substr(0, colon)), static_cast<int>(*id));
        }
        if (t.by_name_.empty()) throw ConfigError("class table is empty");
        return t;
    }

    void add(const std::string& name, int id) {
        if (name.empty()) throw ConfigError("class name must not be empty");
        if (by_name_.count(name) || by_id_.count(id)) {
            throw ConfigError(fmt::format("duplicate class table entry {}:{}", name, id));
        }
        by_name_[name] = id;
        by_id_[id] = name;
    }

    std::optional<int> id_of(const std::string& name) const {
        const auto it = by_name_.find(name);
        if (it == by_name_.end()) return std::nullopt;
        return it->second;
    }

    std::string name_of(int id) const {
        const auto it = by_id_.find(id);
        return it == by_id_.end() ? fmt::format("class{}", id) : it->second;
    }

    std::vector<int> ids() const {
        std::vector<int> out;
        for (const auto& [id, name] : by_id_) out.push_back(id);
        return out;
    }

    std::string to_string() const {
        std::string s;
        for (const auto& [id, name] : by_id_) s += (s.empty() ? "" : ",") + fmt::format("{}:{}", name, id);
        return s;
    }

private:
    std::map<std::string, int> by_name_;
    std::map<int, std::string> by_id_;
};

struct ImageRecord {
    std::string image_id;
    std::string file_path;
    int width = 0;
    int height = 0;

    friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct GroundTruthObject {
    BoundingBox box;
    int class_id = 0;
    bool difficult = false;

    friend bool operator==(const GroundTruthObject&, const GroundTruthObject&) = default;
};

struct AnnotatedImage {
    ImageRecord record;
    std::vector<GroundTruthObject> objects;

    friend bool operator==(const AnnotatedImage&, const AnnotatedImage&) = default;
};

/// Ground truth keyed by image id.
using GroundTruthSet = std::map<std::string, AnnotatedImage>;

/// Detections keyed by image id.
using PredictionSet = std::map<std::string, std::vector<Detection>>;

// ---------------------------------------------------------------------------
// VOC XML
// ---------------------------------------------------------------------------

namespace detail {

namespace pt = boost::property_tree;

inline double voc_number(const pt::ptree& node, const std::string& key, const std::string& where) {
    const auto text = node.get_optional<std::string>(key);
    if (!text) throw DataError(where + ": missing element <" + key + ">");
    const auto v = parse_double(*text);
    if (!v) throw DataError(where + ": <" + key + "> is not a number: '" + *text + "'");
    return *v;
}

}  // namespace detail

/// Parses one VOC XML annotation from a stream. VOC pixel indices are 1-based,
/// so xmin and ymin are shifted by -1 into the continuous 0-based frame.
inline AnnotatedImage parse_voc_xml(std::istream& in, const std::string& image_id, const std::string& origin,
                                    const ClassTable& classes = ClassTable::tiger()) {
    namespace pt = boost::property_tree;
    pt::ptree doc;
    try {
        pt::read_xml(in, doc);
    } catch (const pt::xml_parser_error& e) {
        throw DataError(origin + ": malformed XML: " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    const auto root = doc.get_child_optional("annotation");
    if (!root) throw DataError(origin + ": missing <annotation> root element");

    AnnotatedImage out;
    out.record.image_id = image_id;
    out.record.file_path = root->get<std::string>("filename", "");
    const auto size = root->get_child_optional("size");
    if (!size) throw DataError(origin + ": missing <size> element");
    const double w = detail::voc_number(*size, "width", origin + " <size>");
    const double h = detail::voc_number(*size, "height", origin + " <size>");
    if (w < 1 || h < 1 || w != std::floor(w) || h != std::floor(h)) {
        throw DataError(fmt::format("{}: invalid image size {}x{}", origin, w, h));
    }
    out.record.width = static_cast<int>(w);
    out.record.height = static_cast<int>(h);

    int index = 0;
    for (const auto& [tag, node] : *root) {
        if (tag != "object") continue;
        const std::string where = fmt::format("{}: object {}", origin, index);
        const auto name = node.get_optional<std::string>("name");
        if (!name) throw DataError(where + ": missing <name>");
        const auto id = classes.id_of(trim(*name));
        if (!id) throw DataError(where + ": unknown class name '" + trim(*name) + "'");
        const auto bnd = node.get_child_optional("bndbox");
        if (!bnd) throw DataError(where + ": missing <bndbox>");
        const double xmin = detail::voc_number(*bnd, "xmin", where);
        const double ymin = detail::voc_number(*bnd, "ymin", where);
        const double xmax = detail::voc_number(*bnd, "xmax", where);
        const double ymax = detail::voc_number(*bnd, "ymax", where);
        if (!(xmax > xmin) || !(ymax > ymin)) {
            throw DataError(fmt::format("{}: degenerate box xmin={} ymin={} xmax={} ymax={}", where, xmin, ymin,
                                        xmax, ymax));
        }
        GroundTruthObject obj;
        obj.box = BoundingBox::make(xmin - 1.0, ymin - 1.0, xmax, ymax);
        obj.class_id = *id;
        const auto difficult = trim(node.get<std::string>("difficult", "0"));
        if (difficult != "0" && difficult != "1") {
            throw DataError(where + ": <difficult> must be 0 or 1, got '" + difficult + "'");
        }
        obj.difficult = difficult == "1";
        out.objects.push_back(obj);
        ++index;
    }
    return out;
}

/// Parses a VOC XML file; the image id is the file stem.
inline AnnotatedImage parse_voc_xml(const std::filesystem::path& path,
                                    const ClassTable& classes = ClassTable::tiger()) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open annotation file: " + path.string());
    return parse_voc_xml(in, path.stem().string(), path.string(), classes);
}

/// Serializes to VOC XML, undoing the 0-based shift applied by the parser.
/// Boxes at most one pixel wide or tall have no VOC form (the stored xmax
/// would not exceed xmin) and are rejected.
inline void write_voc_xml(std::ostream& out, const AnnotatedImage& image,
                          const ClassTable& classes = ClassTable::tiger()) {
    namespace pt = boost::property_tree;
    for (std::size_t i = 0; i < image.objects.size(); ++i) {
        const auto& b = image.objects[i].box;
        if (!(b.width() > 1.0) || !(b.height() > 1.0)) {
            throw DataError(fmt::format("{}: object {}: box {}x{} is too small for VOC pixel coordinates",
                                        image.record.image_id, i, b.width(), b.height()));
        }
    }
    pt::ptree root;
    root.put("filename", image.record.file_path);
    root.put("size.width", image.record.width);
    root.put("size.height", image.record.height);
    root.put("size.depth", 3);
    for (const auto& obj : image.objects) {
        pt::ptree node;
        node.put("name", classes.name_of(obj.class_id));
        node.put("difficult", obj.difficult ? 1 : 0);
        node.put("bndbox.xmin", fmt::format("{}", obj.box.x_min + 1.0));
        node.put("bndbox.ymin", fmt::format("{}", obj.box.y_min + 1.0));
        node.put("bndbox.xmax", fmt::format("{}", obj.box.x_max));
        node.put("bndbox.ymax", fmt::format("{}", obj.box.y_max));
        root.add_child("object", node);
    }
    pt::ptree doc;
    doc.add_child("annotation", root);
    pt::write_xml(out, doc, pt::xml_writer_make_settings<std::string>(' ', 2));
}

inline void write_voc_xml(const std::filesystem::path& path, const AnnotatedImage& image,
                          const ClassTable& classes = ClassTable::tiger()) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write annotation file: " + path.string());
    write_voc_xml(out, image, classes);
    if (!out) throw DataError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// JSON-lines predictions
// ---------------------------------------------------------------------------

/// Parses JSON-lines predictions, one detection per line:
/// {"image_id", "x_min", "y_min", "x_max", "y_max", "score", "class_id"}.
/// Blank lines are skipped; class_id defaults to 0.
inline PredictionSet parse_predictions(std::istream& in, const std::string& origin) {
    PredictionSet out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = fmt::format("{}:{}", origin, line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(where + ": malformed JSON: " + e.what());
        }
        if (!j.is_object()) throw DataError(where + ": expected a JSON object");
        const auto number = [&](const char* key) {
            const auto it = j.find(key);
            if (it == j.end() || !it->is_number()) throw DataError(where + ": missing numeric field '" + key + "'");
            return it->get<double>();
        };
        const auto id_it = j.find("image_id");
        if (id_it == j.end() || !id_it->is_string()) throw DataError(where + ": missing string field 'image_id'");
        Detection d;
        const double x0 = number("x_min");
        const double y0 = number("y_min");
        const double x1 = number("x_max");
        const double y1 = number("y_max");
        if (!BoundingBox::is_valid(x0, y0, x1, y1)) {
            throw DataError(fmt::format("{}: degenerate box ({}, {}, {}, {})", where, x0, y0, x1, y1));
        }
        d.box = {x0, y0, x1, y1};
        d.score = number("score");
        if (!(d.score >= 0.0 && d.score <= 1.0)) {
            throw DataError(fmt::format("{}: score {} is outside [0,1]", where, d.score));
        }
        if (const auto cit = j.find("class_id"); cit != j.end()) {
            if (!cit->is_number_integer() || cit->get<long long>() < 0) {
                throw DataError(where + ": class_id must be a non-negative integer");
            }
            d.class_id = cit->get<int>();
        }
        out[id_it->get<std::string>()].push_back(d);
    }
    return out;
}

inline PredictionSet parse_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open predictions file: " + path.string());
    return parse_predictions(in, path.string());
}

/// Writes predictions sorted by (image_id, canonical detection order).
inline void write_predictions(std::ostream& out, const PredictionSet& preds) {
    for (const auto& [image_id, dets] : preds) {
        std::vector<Detection> sorted = dets;
        std::sort(sorted.begin(), sorted.end(), detection_before);
        for (const auto& d : sorted) {
            nlohmann::ordered_json j;
            j["image_id"] = image_id;
            j["x_min"] = d.box.x_min;
            j["y_min"] = d.box.y_min;
            j["x_max"] = d.box.x_max;
            j["y_max"] = d.box.y_max;
            j["score"] = d.score;
            j["class_id"] = d.class_id;
            out << j.dump() << '\n';
        }
    }
}

inline void write_predictions(const std::filesystem::path& path, const PredictionSet& preds) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write predictions file: " + path.string());
    write_predictions(out, preds);
    if (!out) throw DataError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Dataset layout
// ---------------------------------------------------------------------------

/// Reads a split list: one image id per line; blank lines and '#' comments skipped.
inline std::vector<std::string> read_split_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open split list: " + path.string());
    std::vector<std::string> ids;
    std::set<std::string> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto id = trim(line);
        if (id.empty() || id.front() == '#') continue;
        if (!seen.insert(id).second) {
            throw DataError(fmt::format("{}:{}: duplicate image id '{}'", path.string(), line_no, id));
        }
        ids.push_back(std::move(id));
    }
    return ids;
}

/// Dataset directory layout (VOC style):
///   <root>/Annotations/<image_id>.xml
///   <root>/JPEGImages/<image_id>.{jpg,jpeg,png}
struct DatasetLayout {
    std::filesystem::path root;

    std::filesystem::path annotations_dir() const { return root / "Annotations"; }
    std::filesystem::path images_dir() const { return root / "JPEGImages"; }

    /// Every annotation stem, sorted.
    std::vector<std::string> all_image_ids() const {
        std::vector<std::string> ids;
        if (!std::filesystem::is_directory(annotations_dir())) {
            throw DataError("annotation directory not found: " + annotations_dir().string());
        }
        for (const auto& entry : std::filesystem::directory_iterator(annotations_dir())) {
            if (entry.is_regular_file() && entry.path().extension() == ".xml") {
                ids.push_back(entry.path().stem().string());
            }
        }
        std::sort(ids.begin(), ids.end());
        return ids;
    }
};

/// Finds <dir>/<image_id> with a supported image extension.
inline std::optional<std::filesystem::path> find_image(const std::filesystem::path& dir, const std::string& image_id) {
    for (const char* ext : {".png", ".jpg", ".jpeg", ".PNG", ".JPG", ".JPEG"}) {
        auto p = dir / (image_id + ext);
        if (std::filesystem::is_regular_file(p)) return p;
    }
    return std::nullopt;
}

inline GroundTruthSet load_ground_truth(const std::filesystem::path& annotations_dir,
                                        const std::vector<std::string>& image_ids,
                                        const ClassTable& classes = ClassTable::tiger()) {
    GroundTruthSet gts;
    for (const auto& id : image_ids) {
        gts.emplace(id, parse_voc_xml(annotations_dir / (id + ".xml"), classes));
    }
    return gts;
}

struct DatasetStats {
    std::size_t image_count = 0;
    std::size_t box_count = 0;
    std::map<int, std::size_t> per_class;

    friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

inline DatasetStats dataset_stats(const GroundTruthSet& gts) {
    DatasetStats s;
    s.image_count = gts.size();
    for (const auto& [id, image] : gts) {
        s.box_count += image.objects.size();
        for (const auto& obj : image.objects) ++s.per_class[obj.class_id];
    }
    return s;
}

}  // namespace tigereval
