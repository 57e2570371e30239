#include "voxqa/checkpoint.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "voxqa/errors.hpp"

namespace voxqa {

void save_checkpoint(const std::vector<nn::Parameter<float>>& params, const std::string& path) {
    std::set<std::string> names;
    for (const auto& p : params)
        if (!names.insert(p.name).second)
            throw ValueError("checkpoint: duplicate parameter name " + p.name);
    std::ostringstream manifest;
    manifest << "VCKPT1 " << params.size() << "\n";
    std::size_t offset = 0;
    for (const auto& p : params) {
        manifest << p.name << " " << p.value.ndim();
        for (const auto d : p.value.shape()) manifest << " " << d;
        manifest << " " << offset << "\n";
        offset += p.value.size();
    }
    manifest << "END\n";

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path + ": cannot open for writing");
    const std::string head = manifest.str();
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (const auto& p : params)
        out.write(reinterpret_cast<const char*>(p.value.data()),
                  static_cast<std::streamsize>(p.value.size() * sizeof(float)));
    if (!out) throw IoError(path + ": write failed");
}

void load_checkpoint(std::vector<nn::Parameter<float>>& params, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path + ": cannot open");
    std::string line;
    if (!std::getline(in, line)) throw IoError(path + ": missing checkpoint header");
    std::istringstream hs(line);
    std::string magic;
    std::size_t count = 0;
    if (!(hs >> magic >> count) || magic != "VCKPT1")
        throw IoError(path + ": not a checkpoint file");

    struct Entry {
        nn::Shape shape;
        std::size_t offset = 0;
    };
    std::map<std::string, Entry> entries;
    std::size_t payload_count = 0;
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(in, line)) throw IoError(path + ": truncated manifest");
        std::istringstream ls(line);
        std::string name;
        std::size_t ndim = 0;
        if (!(ls >> name >> ndim)) throw IoError(path + ": malformed manifest line: " + line);
        Entry e;
        e.shape.resize(ndim);
        for (auto& d : e.shape)
            if (!(ls >> d)) throw IoError(path + ": malformed shape in: " + line);
        if (!(ls >> e.offset)) throw IoError(path + ": missing offset in: " + line);
        payload_count += nn::shape_numel(e.shape);
        if (!entries.emplace(name, std::move(e)).second)
            throw IoError(path + ": duplicate parameter " + name);
    }
    if (!std::getline(in, line) || line != "END") throw IoError(path + ": missing END marker");

    std::vector<float> payload(payload_count);
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload_count * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != payload_count * sizeof(float))
        throw IoError(path + ": payload shorter than manifest");

    if (params.size() != entries.size())
        throw IoError(path + ": checkpoint has " + std::to_string(entries.size()) +
                      " entries, model has " + std::to_string(params.size()));
    for (auto& p : params) {
        const auto it = entries.find(p.name);
        if (it == entries.end()) throw IoError(path + ": missing parameter " + p.name);
        if (it->second.shape != p.value.shape())
            throw IoError(path + ": shape mismatch for " + p.name + ": stored " +
                          nn::shape_str(it->second.shape) + ", model " +
                          nn::shape_str(p.value.shape()));
        const std::size_t n = p.value.size();
        if (it->second.offset + n > payload.size())
            throw IoError(path + ": offset out of range for " + p.name);
        std::copy(payload.begin() + static_cast<std::ptrdiff_t>(it->second.offset),
                  payload.begin() + static_cast<std::ptrdiff_t>(it->second.offset + n),
                  p.value.values().begin());
    }
}

std::uint64_t param_digest(const std::vector<nn::Parameter<float>>& params) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const unsigned char* bytes, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& p : params) {
        mix(reinterpret_cast<const unsigned char*>(p.name.data()), p.name.size());
        mix(reinterpret_cast<const unsigned char*>(p.value.data()),
            p.value.size() * sizeof(float));
    }
    return h;
}

} // namespace voxqa
