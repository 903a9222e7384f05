#pragma once

// Network checkpoint container. Byte layout (all integers and reals little-endian):
//
//   magic        8 bytes  "SRNETCK1"
//   version      u32      = 1
//   n_dims       u32
//   layer_dims   u64 x n_dims
//   beta         f64
//   n_params     u32
//   n_params times:
//     name_len   u32
//     name       name_len bytes, e.g. "layer0.weight"
//     rank       u32
//     extents    u64 x rank
//     data       f64 x prod(extents), row-major
//
// Doubles are stored by bit pattern, so save/load round-trips exactly.

#include <filesystem>
#include <string>
#include <vector>

#include "spectralreg/io.hpp"
#include "spectralreg/network.hpp"

namespace spectralreg {

inline constexpr char kCheckpointMagic[9] = "SRNETCK1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string encode_checkpoint(const Network& net) {
    std::string out(kCheckpointMagic, 8);
    io::put_u32(out, kCheckpointVersion);
    const auto& dims = net.layer_dims();
    io::put_u32(out, static_cast<std::uint32_t>(dims.size()));
    for (std::size_t d : dims) io::put_u64(out, d);
    io::put_f64(out, net.beta());
    const auto params = net.parameters();
    const auto names = net.parameter_names();
    io::put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        io::put_u32(out, static_cast<std::uint32_t>(names[i].size()));
        out += names[i];
        io::put_u32(out, static_cast<std::uint32_t>(params[i].rank()));
        for (std::size_t e : params[i].shape()) io::put_u64(out, e);
        for (double v : params[i].values()) io::put_f64(out, v);
    }
    return out;
}

inline Network decode_checkpoint(std::string_view bytes, const std::string& source = "checkpoint") {
    io::ByteReader in(bytes, source);
    if (in.str(8) != std::string(kCheckpointMagic, 8)) throw ConfigError(source + ": bad magic");
    if (const auto v = in.u32(); v != kCheckpointVersion) {
        throw ConfigError(source + ": unsupported version " + std::to_string(v));
    }
    std::vector<std::size_t> dims(in.u32());
    for (auto& d : dims) d = in.u64();
    const double beta = in.f64();
    const std::uint32_t n_params = in.u32();
    if (dims.size() < 2 || n_params != 2 * (dims.size() - 1)) {
        throw ConfigError(source + ": parameter count does not match layer_dims");
    }
    std::vector<Layer> layers(dims.size() - 1);
    for (std::uint32_t i = 0; i < n_params; ++i) {
        const std::string name = in.str(in.u32());
        Shape shape(in.u32());
        for (auto& e : shape) e = in.u64();
        std::vector<double> data(shape_size(shape));
        for (double& v : data) v = in.f64();
        const std::string expected = "layer" + std::to_string(i / 2) + (i % 2 ? ".bias" : ".weight");
        if (name != expected) throw ConfigError(source + ": expected parameter " + expected + ", found " + name);
        Tensor t(std::move(shape), std::move(data));
        (i % 2 ? layers[i / 2].bias : layers[i / 2].weight) = std::move(t);
    }
    if (!in.at_end()) throw ConfigError(source + ": trailing bytes");
    Network net(std::move(layers), beta);
    if (net.layer_dims() != dims) throw ConfigError(source + ": layer_dims disagree with parameter shapes");
    return net;
}

inline void save_checkpoint(const Network& net, const std::filesystem::path& path) {
    io::atomic_write(path, encode_checkpoint(net));
}

inline Network load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(io::read_file(path), path.string());
}

}  // namespace spectralreg
