#include "marginlab/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace marginlab::checkpoint {

namespace fs = std::filesystem;

namespace {

void put_f64(std::ostream& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (char& b : bytes) {
        b = static_cast<char>(bits & 0xFF);
        bits >>= 8;
    }
    out.write(bytes, 8);
}

double get_f64(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in) throw std::runtime_error("checkpoint: truncated tensor data");
    std::uint64_t bits = 0;
    for (int k = 7; k >= 0; --k) bits = (bits << 8) | bytes[k];
    return std::bit_cast<double>(bits);
}

}  // namespace

void save(const scorer::ScorerParams& params, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("checkpoint: cannot write " + (dir / "params.bin").string());
    nlohmann::ordered_json manifest;
    manifest["format"] = "marginlab-checkpoint";
    manifest["version"] = 1;
    manifest["dtype"] = "f64le";
    std::vector<int> sizes{static_cast<int>(params.input_dim())};
    for (const auto& l : params.hidden) sizes.push_back(static_cast<int>(l.weight.rows()));
    sizes.push_back(static_cast<int>(params.num_classes()));
    manifest["layer_sizes"] = sizes;
    auto tensors = nlohmann::ordered_json::array();
    std::size_t offset = 0;
    params.for_each_tensor([&](const std::string& name, Eigen::Map<const Matrix> t) {
        tensors.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}, {"offset", offset}});
        for (Eigen::Index k = 0; k < t.size(); ++k) put_f64(bin, t.data()[k]);
        offset += static_cast<std::size_t>(t.size()) * 8;
    });
    manifest["tensors"] = tensors;
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

scorer::ScorerParams load(const fs::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("checkpoint: missing manifest in " + dir.string());
    const auto manifest = nlohmann::json::parse(mf);
    if (manifest.at("format") != "marginlab-checkpoint" || manifest.at("version") != 1) {
        throw std::runtime_error("checkpoint: unsupported manifest");
    }
    auto params = scorer::init_params(manifest.at("layer_sizes").get<std::vector<int>>(), 0);
    const auto& entries = manifest.at("tensors");
    std::ifstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("checkpoint: missing params.bin in " + dir.string());
    std::size_t k = 0;
    params.for_each_tensor([&](const std::string& name, Eigen::Map<Matrix> t) {
        if (k >= entries.size()) throw std::runtime_error("checkpoint: manifest lacks " + name);
        const auto& e = entries[k++];
        const auto shape = e.at("shape").get<std::vector<Eigen::Index>>();
        if (e.at("name") != name || shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols()) {
            throw std::runtime_error("checkpoint: tensor " + name + " does not match the manifest");
        }
        bin.seekg(static_cast<std::streamoff>(e.at("offset").get<std::size_t>()));
        for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = get_f64(bin);
    });
    if (k != entries.size()) throw std::runtime_error("checkpoint: manifest has extra tensors");
    return params;
}

}  // namespace marginlab::checkpoint
