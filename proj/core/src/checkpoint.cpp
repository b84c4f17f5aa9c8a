#include "spider/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "spider/errors.hpp"

namespace spider {

void save_checkpoint(const std::string& path, const CheckpointData& ckpt) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << "SPCKPT 1\n";
    f << "count " << ckpt.params.size() << '\n';
    size_t offset = 0;
    for (const auto& [name, e] : ckpt.params) {  // std::map iterates sorted
        f << name << ' ' << e.shape.size();
        for (int d : e.shape) f << ' ' << d;
        f << ' ' << offset << '\n';
        offset += e.values.size();
    }
    f << '\n';
    for (const auto& [name, e] : ckpt.params)
        f.write(reinterpret_cast<const char*>(e.values.data()),
                std::streamsize(e.values.size() * sizeof(float)));
    if (!f) throw IoError("short write to " + path);
    if (ckpt.config.keys().empty()) return;
    ckpt.config.save(path + ".config");
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(f, line) || line != "SPCKPT 1")
        throw FormatError(path + ": not an SPCKPT 1 file");
    if (!std::getline(f, line) || line.rfind("count ", 0) != 0)
        throw FormatError(path + ": malformed count line");
    size_t count = std::stoull(line.substr(6));

    struct Rec {
        std::string name;
        Shape shape;
        size_t offset = 0, size = 0;
    };
    std::vector<Rec> recs;
    size_t total = 0;
    for (size_t i = 0; i < count; ++i) {
        if (!std::getline(f, line)) throw FormatError(path + ": truncated manifest");
        std::istringstream ss(line);
        Rec r;
        size_t ndim = 0;
        if (!(ss >> r.name >> ndim)) throw FormatError(path + ": malformed manifest line");
        r.shape.resize(ndim);
        for (size_t d = 0; d < ndim; ++d)
            if (!(ss >> r.shape[d])) throw FormatError(path + ": malformed manifest shape");
        if (!(ss >> r.offset)) throw FormatError(path + ": missing offset");
        r.size = shape_count(r.shape);
        total = std::max(total, r.offset + r.size);
        recs.push_back(std::move(r));
    }
    if (!std::getline(f, line) || !line.empty())
        throw FormatError(path + ": expected blank line before payload");

    std::vector<float> payload(total);
    f.read(reinterpret_cast<char*>(payload.data()), std::streamsize(total * sizeof(float)));
    if (size_t(f.gcount()) != total * sizeof(float))
        throw FormatError(path + ": payload shorter than manifest implies");

    CheckpointData ckpt;
    for (const Rec& r : recs) {
        CheckpointData::Entry e;
        e.shape = r.shape;
        e.values.assign(payload.begin() + std::ptrdiff_t(r.offset),
                        payload.begin() + std::ptrdiff_t(r.offset + r.size));
        ckpt.params.emplace(r.name, std::move(e));
    }
    std::ifstream cfg(path + ".config");
    if (cfg) {
        std::stringstream buf;
        buf << cfg.rdbuf();
        ckpt.config = KvMap::parse(buf.str());
    }
    return ckpt;
}

}  // namespace spider
