#include "hiergauss/error.hpp"
#include "hiergauss/kernel.hpp"

#include <fstream>
#include <string>

namespace hiergauss {

namespace {

using nlohmann::json;

json node_to_json(const KernelNode& node) {
    if (node.is_leaf()) {
        json indices = json::array();
        for (const std::size_t i : node.indices()) {
            indices.push_back(i + 1);
        }
        return {{"leaf", {{"indices", indices}, {"widths", node.widths()}}}};
    }
    json children = json::array();
    for (const auto& c : node.children()) {
        children.push_back(node_to_json(c));
    }
    return {{"internal", {{"weights", node.weights()}, {"children", children}}}};
}

std::vector<double> read_numbers(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_array()) {
        throw ParseError(std::string("missing array \"") + key + "\"", 0);
    }
    std::vector<double> out;
    for (const auto& v : j.at(key)) {
        if (!v.is_number()) {
            throw ParseError(std::string("non-numeric entry in \"") + key + "\"", 0);
        }
        out.push_back(v.get<double>());
    }
    return out;
}

KernelNode node_from_json(const json& j) {
    if (!j.is_object() || j.size() != 1) {
        throw ParseError("kernel node must be an object with exactly one of \"leaf\" or \"internal\"", 0);
    }
    if (j.contains("leaf")) {
        const auto& leaf = j.at("leaf");
        if (!leaf.contains("indices") || !leaf.at("indices").is_array()) {
            throw ParseError("leaf is missing \"indices\"", 0);
        }
        std::vector<std::size_t> indices;
        for (const auto& v : leaf.at("indices")) {
            if (!v.is_number_integer() || v.get<long long>() < 1) {
                throw ParseError("leaf indices must be integers >= 1", 0);
            }
            indices.push_back(static_cast<std::size_t>(v.get<long long>() - 1));
        }
        return KernelNode::leaf(std::move(indices), read_numbers(leaf, "widths"));
    }
    if (j.contains("internal")) {
        const auto& in = j.at("internal");
        if (!in.contains("children") || !in.at("children").is_array()) {
            throw ParseError("internal node is missing \"children\"", 0);
        }
        std::vector<KernelNode> children;
        for (const auto& c : in.at("children")) {
            children.push_back(node_from_json(c));
        }
        return KernelNode::internal(std::move(children), read_numbers(in, "weights"));
    }
    throw ParseError("kernel node must be \"leaf\" or \"internal\"", 0);
}

}  // namespace

json to_json(const KernelArchitecture& arch) {
    return {{"gamma", arch.gamma()}, {"input_dim", arch.input_dim()}, {"root", node_to_json(arch.root())}};
}

KernelArchitecture architecture_from_json(const json& j) {
    if (!j.is_object() || !j.contains("gamma") || !j.contains("input_dim") || !j.contains("root")) {
        throw ParseError("architecture needs \"gamma\", \"input_dim\" and \"root\"", 0);
    }
    if (!j.at("gamma").is_number() || !j.at("input_dim").is_number_integer() || j.at("input_dim").get<long long>() < 1) {
        throw ParseError("\"gamma\" must be a number and \"input_dim\" a positive integer", 0);
    }
    return {node_from_json(j.at("root")), j.at("gamma").get<double>(),
            static_cast<std::size_t>(j.at("input_dim").get<long long>())};
}

KernelArchitecture load_architecture(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open architecture file " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what(), 0);
    }
    return architecture_from_json(j);
}

void save_architecture(const KernelArchitecture& arch, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write architecture file " + path.string());
    }
    out << to_json(arch).dump(2) << '\n';
}

}  // namespace hiergauss
