#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "matrix.hpp"
#include "opinion.hpp"

namespace uqkit {

inline nlohmann::json opinion_to_json(const MultinomialOpinion& op) {
    return nlohmann::json{
        {"belief", op.belief}, {"uncertainty", op.uncertainty}, {"base_rate", op.base_rate}};
}

inline nlohmann::json opinion_to_json(const BinomialOpinion& op) {
    return nlohmann::json{
        {"belief", Vec{op.b, op.d}}, {"uncertainty", op.u}, {"base_rate", Vec{op.a, 1.0 - op.a}}};
}

inline MultinomialOpinion opinion_from_json(const nlohmann::json& j) {
    MultinomialOpinion op;
    op.belief = j.at("belief").get<Vec>();
    op.uncertainty = j.at("uncertainty").get<double>();
    op.base_rate = j.at("base_rate").get<Vec>();
    op.validate();
    return op;
}

// Event streams cross the CLI boundary as JSON lines, one segment per line:
//   {"t": 0, "features": [...], "labels": [...]}
inline void write_stream_jsonl(std::ostream& out, const Mat& features, const Mat& labels) {
    if (features.rows != labels.rows)
        throw std::invalid_argument("write_stream_jsonl: feature/label length mismatch");
    for (int t = 0; t < features.rows; ++t) {
        nlohmann::json j{{"t", t}, {"features", features.row(t)}, {"labels", labels.row(t)}};
        out << j.dump() << "\n";
    }
}

struct StreamData {
    Mat features;
    Mat labels;
};

inline StreamData read_stream_jsonl(std::istream& in) {
    std::vector<Vec> feats, labs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        feats.push_back(j.at("features").get<Vec>());
        labs.push_back(j.at("labels").get<Vec>());
    }
    if (feats.empty()) throw std::runtime_error("read_stream_jsonl: empty stream");
    StreamData s;
    s.features = Mat(static_cast<int>(feats.size()), static_cast<int>(feats[0].size()));
    s.labels = Mat(static_cast<int>(labs.size()), static_cast<int>(labs[0].size()));
    for (size_t t = 0; t < feats.size(); ++t) {
        if (feats[t].size() != static_cast<size_t>(s.features.cols) ||
            labs[t].size() != static_cast<size_t>(s.labels.cols))
            throw std::runtime_error("read_stream_jsonl: ragged rows");
        s.features.set_row(static_cast<int>(t), feats[t]);
        s.labels.set_row(static_cast<int>(t), labs[t]);
    }
    return s;
}

inline StreamData read_stream_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open stream file: " + path);
    return read_stream_jsonl(in);
}

}  // namespace uqkit
