#include "oftta/weights_io.hpp"

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "oftta/prototype.hpp"

namespace oftta {

std::uint32_t crc32(const void* data, std::size_t bytes, std::uint32_t seed) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k)
                c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = seed ^ 0xFFFFFFFFu;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i)
        c = table[(c ^ p[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

namespace {

constexpr char kMagic[] = "OFTTA1";

std::string fmt_float(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

struct TensorRef {
    std::string name, role;
    std::vector<int> shape;
    const float* data;
    std::size_t count;
};

void append_le32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

// Payload floats are written as raw little-endian bytes; this build targets
// little-endian hosts only.
static_assert(sizeof(float) == 4, "float must be IEEE-754 binary32");

} // namespace

void save_model(const std::string& path, const SavedModel& saved) {
    const NetworkModel& model = saved.model;
    std::vector<TensorRef> tensors;
    auto add = [&tensors](const std::string& name, const std::string& role,
                          std::vector<int> shape, const float* data,
                          std::size_t count) {
        tensors.push_back({name, role, std::move(shape), data, count});
    };
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        const auto& b = model.blocks[i];
        const std::string p = "block" + std::to_string(i) + ".";
        const auto& w = b.conv.weights;
        add(p + "conv.weight", "conv.weight", {w.b, w.c, w.h, w.w},
            w.data.data(), w.data.size());
        add(p + "conv.bias", "conv.bias", {static_cast<int>(b.conv.bias.size())},
            b.conv.bias.data(), b.conv.bias.size());
        add(p + "bn.gamma", "bn.gamma", {b.bn.channels()}, b.bn.gamma.data(),
            b.bn.gamma.size());
        add(p + "bn.beta", "bn.beta", {b.bn.channels()}, b.bn.beta.data(),
            b.bn.beta.size());
        add(p + "bn.running_mean", "bn.running_mean", {b.bn.channels()},
            b.bn.running_mean.data(), b.bn.running_mean.size());
        add(p + "bn.running_var", "bn.running_var", {b.bn.channels()},
            b.bn.running_var.data(), b.bn.running_var.size());
    }
    add("head.weight", "head.weight",
        {model.head.weight.rows, model.head.weight.cols},
        model.head.weight.data.data(), model.head.weight.data.size());
    add("head.bias", "head.bias", {static_cast<int>(model.head.bias.size())},
        model.head.bias.data(), model.head.bias.size());

    std::ostringstream header;
    header << kMagic << "\n";
    header << "meta class_count " << model.class_count << "\n";
    header << "meta input " << model.in_c << " " << model.in_h << " "
           << model.in_w << "\n";
    header << "meta blocks " << model.blocks.size() << "\n";
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        const auto& b = model.blocks[i];
        header << "meta block" << i << " stride " << b.conv.stride_h << " "
               << b.conv.stride_w << " pool " << b.pool_h << " " << b.pool_w
               << " " << b.pool_sh << " " << b.pool_sw << " eps "
               << fmt_float(b.bn.eps) << " momentum " << fmt_float(b.bn.momentum)
               << "\n";
    }
    if (saved.has_norm) {
        header << "meta input_mean";
        for (float v : saved.norm.mean) header << " " << fmt_float(v);
        header << "\nmeta input_std";
        for (float v : saved.norm.stddev) header << " " << fmt_float(v);
        header << "\n";
    }
    std::size_t offset = 0;
    for (const auto& t : tensors) {
        header << "tensor " << t.name << " " << t.role << " " << t.shape.size();
        for (int d : t.shape) header << " " << d;
        header << " " << offset << " " << t.count << "\n";
        offset += t.count * sizeof(float);
    }
    header << "end_header\n";

    std::string payload;
    payload.reserve(offset);
    for (const auto& t : tensors)
        payload.append(reinterpret_cast<const char*>(t.data),
                       t.count * sizeof(float));
    std::string footer;
    append_le32(footer, crc32(payload.data(), payload.size()));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_model: cannot write " + path);
    const std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out.write(footer.data(), static_cast<std::streamsize>(footer.size()));
    if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

SavedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_model: cannot open " + path);
    std::string contents((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
    const std::string sentinel = "end_header\n";
    const std::size_t hdr_end = contents.find(sentinel);
    if (hdr_end == std::string::npos)
        throw std::runtime_error("load_model: missing end_header in " + path);
    std::istringstream header(contents.substr(0, hdr_end));
    std::string magic;
    std::getline(header, magic);
    if (magic != kMagic)
        throw std::runtime_error("load_model: bad magic in " + path);

    const std::size_t payload_begin = hdr_end + sentinel.size();
    if (contents.size() < payload_begin + 4)
        throw std::runtime_error("load_model: truncated file " + path);
    const std::size_t payload_size = contents.size() - payload_begin - 4;
    const char* payload = contents.data() + payload_begin;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i)
        stored |= static_cast<std::uint32_t>(
                      static_cast<unsigned char>(contents[payload_begin +
                                                          payload_size + i]))
                  << (8 * i);
    if (crc32(payload, payload_size) != stored)
        throw std::runtime_error("load_model: checksum mismatch in " + path);

    SavedModel saved;
    NetworkModel& model = saved.model;
    struct TensorInfo {
        std::vector<int> shape;
        std::size_t offset = 0, count = 0;
        bool seen = false;
    };
    std::map<std::string, TensorInfo> index;
    std::size_t n_blocks = 0;
    std::string line;
    while (std::getline(header, line)) {
        std::istringstream ss(line);
        std::string kind;
        ss >> kind;
        if (kind == "meta") {
            std::string key;
            ss >> key;
            if (key == "class_count") ss >> model.class_count;
            else if (key == "input") ss >> model.in_c >> model.in_h >> model.in_w;
            else if (key == "blocks") {
                ss >> n_blocks;
                model.blocks.resize(n_blocks);
            } else if (key.rfind("block", 0) == 0) {
                const std::size_t bi = std::stoul(key.substr(5));
                if (bi >= model.blocks.size())
                    throw std::runtime_error("load_model: block meta before blocks count");
                auto& b = model.blocks[bi];
                std::string tag;
                while (ss >> tag) {
                    if (tag == "stride") ss >> b.conv.stride_h >> b.conv.stride_w;
                    else if (tag == "pool")
                        ss >> b.pool_h >> b.pool_w >> b.pool_sh >> b.pool_sw;
                    else if (tag == "eps") ss >> b.bn.eps;
                    else if (tag == "momentum") ss >> b.bn.momentum;
                    else throw std::runtime_error("load_model: unknown block tag " + tag);
                }
            } else if (key == "input_mean" || key == "input_std") {
                auto& dst = key == "input_mean" ? saved.norm.mean : saved.norm.stddev;
                float v;
                while (ss >> v) dst.push_back(v);
                saved.has_norm = true;
            } else {
                throw std::runtime_error("load_model: unknown meta key " + key);
            }
        } else if (kind == "tensor") {
            std::string name, role;
            std::size_t ndims;
            ss >> name >> role >> ndims;
            TensorInfo info;
            info.shape.resize(ndims);
            for (auto& d : info.shape) ss >> d;
            ss >> info.offset >> info.count;
            if (!ss)
                throw std::runtime_error("load_model: malformed tensor line: " + line);
            if (index.count(name))
                throw std::runtime_error("load_model: duplicate tensor " + name);
            if (info.offset + info.count * sizeof(float) > payload_size)
                throw std::runtime_error("load_model: tensor " + name +
                                         " exceeds payload");
            index[name] = std::move(info);
        } else if (!kind.empty()) {
            throw std::runtime_error("load_model: unknown header line: " + line);
        }
    }

    auto fetch = [&](const std::string& name, std::vector<float>& dst,
                     std::vector<int>* shape = nullptr) {
        auto it = index.find(name);
        if (it == index.end())
            throw std::runtime_error("load_model: missing tensor " + name);
        dst.resize(it->second.count);
        std::memcpy(dst.data(), payload + it->second.offset,
                    it->second.count * sizeof(float));
        if (shape) *shape = it->second.shape;
        it->second.seen = true;
    };

    for (std::size_t i = 0; i < n_blocks; ++i) {
        auto& b = model.blocks[i];
        const std::string p = "block" + std::to_string(i) + ".";
        std::vector<int> shape;
        std::vector<float> w;
        fetch(p + "conv.weight", w, &shape);
        if (shape.size() != 4)
            throw std::runtime_error("load_model: conv weight must be rank 4");
        b.conv.weights = Tensor4(shape[0], shape[1], shape[2], shape[3]);
        b.conv.weights.data = std::move(w);
        fetch(p + "conv.bias", b.conv.bias);
        fetch(p + "bn.gamma", b.bn.gamma);
        fetch(p + "bn.beta", b.bn.beta);
        fetch(p + "bn.running_mean", b.bn.running_mean);
        fetch(p + "bn.running_var", b.bn.running_var);
    }
    std::vector<int> head_shape;
    std::vector<float> hw;
    fetch("head.weight", hw, &head_shape);
    if (head_shape.size() != 2)
        throw std::runtime_error("load_model: head weight must be rank 2");
    model.head.weight = Matrix(head_shape[0], head_shape[1]);
    model.head.weight.data = std::move(hw);
    fetch("head.bias", model.head.bias);
    return saved;
}

void export_support_snapshot(const std::string& path, const SupportSet& set) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_support_snapshot: cannot write " + path);
    out << "classes " << set.class_count() << "\n";
    out << "skipped_nonfinite " << set.skipped_nonfinite << "\n";
    for (int k = 0; k < set.class_count(); ++k) {
        out << "class " << k << " entries " << set.per_class[k].size()
            << " entropies";
        for (const auto& e : set.per_class[k]) out << " " << fmt_float(e.entropy);
        out << "\n";
    }
    const PrototypeSet protos = centroids(set);
    for (int k = 0; k < protos.centroids.rows; ++k) {
        out << "centroid " << k;
        for (int i = 0; i < protos.centroids.cols; ++i)
            out << " " << fmt_float(protos.centroids.at(k, i));
        out << "\n";
    }
}

} // namespace oftta
