#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "net.hpp"

namespace uqkit {

namespace detail {

inline std::string act_tag(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Softplus: return "softplus";
        case Activation::Tanh: return "tanh";
    }
    return "?";
}

inline Activation act_from_tag(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "softplus") return Activation::Softplus;
    if (s == "tanh") return Activation::Tanh;
    throw std::runtime_error("checkpoint: unknown activation " + s);
}

inline nlohmann::json dense_to_json(const DenseLayer& l) {
    return {{"rows", l.w.rows}, {"cols", l.w.cols}, {"w", l.w.a}, {"b", l.b}};
}

inline DenseLayer dense_from_json(const nlohmann::json& j) {
    DenseLayer l;
    l.w = Mat(j.at("rows").get<int>(), j.at("cols").get<int>());
    l.w.a = j.at("w").get<std::vector<double>>();
    l.b = j.at("b").get<std::vector<double>>();
    if (l.w.a.size() != static_cast<size_t>(l.w.rows) * l.w.cols)
        throw std::runtime_error("checkpoint: layer size mismatch");
    return l;
}

}  // namespace detail

inline void save_checkpoint(const Net& net, const std::string& path) {
    nlohmann::json j;
    j["format"] = "uqkit-checkpoint-1";
    j["arch"] = arch_name(net.arch);
    j["head"] = net.head == HeadKind::Evidence ? "evidence" : "softmax";
    j["hidden_act"] = detail::act_tag(net.hidden_act);
    j["evidence_act"] = detail::act_tag(net.evidence_act);
    j["dropout"] = net.dropout;
    j["with_bn"] = net.with_bn;
    j["layers"] = nlohmann::json::array();
    for (const auto& l : net.layers) j["layers"].push_back(detail::dense_to_json(l));
    if (net.with_bn) {
        j["bn"] = nlohmann::json::array();
        for (const auto& b : net.bn)
            j["bn"].push_back({{"gamma", b.gamma},
                               {"beta", b.beta},
                               {"run_mean", b.run_mean},
                               {"run_var", b.run_var},
                               {"eps", b.eps},
                               {"momentum", b.momentum}});
    }
    if (net.has_aux) j["aux_head"] = detail::dense_to_json(net.aux_head);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << j.dump(2) << "\n";
}

inline Net load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    in >> j;
    if (j.value("format", "") != "uqkit-checkpoint-1")
        throw std::runtime_error("load_checkpoint: unsupported format");
    Net net;
    std::string arch = j.at("arch").get<std::string>();
    if (arch == "mlp") net.arch = Arch::Mlp;
    else if (arch == "gcn") net.arch = Arch::Gcn;
    else if (arch == "recurrent") net.arch = Arch::Recurrent;
    else throw std::runtime_error("load_checkpoint: unknown arch " + arch);
    net.head = j.at("head").get<std::string>() == "softmax" ? HeadKind::Softmax : HeadKind::Evidence;
    net.hidden_act = detail::act_from_tag(j.at("hidden_act").get<std::string>());
    net.evidence_act = detail::act_from_tag(j.at("evidence_act").get<std::string>());
    net.dropout = j.at("dropout").get<double>();
    net.with_bn = j.at("with_bn").get<bool>();
    for (const auto& lj : j.at("layers")) net.layers.push_back(detail::dense_from_json(lj));
    if (net.with_bn)
        for (const auto& bj : j.at("bn")) {
            BnLayer b(static_cast<int>(bj.at("gamma").size()));
            b.gamma = bj.at("gamma").get<std::vector<double>>();
            b.beta = bj.at("beta").get<std::vector<double>>();
            b.run_mean = bj.at("run_mean").get<std::vector<double>>();
            b.run_var = bj.at("run_var").get<std::vector<double>>();
            b.eps = bj.at("eps").get<double>();
            b.momentum = bj.at("momentum").get<double>();
            net.bn.push_back(std::move(b));
        }
    if (j.contains("aux_head")) {
        net.has_aux = true;
        net.aux_head = detail::dense_from_json(j.at("aux_head"));
    }
    return net;
}

}  // namespace uqkit
