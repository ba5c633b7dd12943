#include "diformer/weights.hpp"

#include <cstring>
#include <fstream>

namespace diformer {

namespace {
constexpr char kMagic[8] = {'D', 'I', 'F', 'W', '0', '0', '0', '1'};
}

void WeightsArchive::add(const std::string &name, const Shape &shape,
                         const std::vector<double> &data) {
    if (static_cast<int64_t>(data.size()) != shape.numel())
        throw Error("archive: tensor " + name + " data/shape mismatch");
    NamedTensor t;
    t.name = name;
    t.shape = shape;
    t.data = data;
    tensors_.push_back(std::move(t));
}

void WeightsArchive::add_store(const std::string &prefix, const ParamStore &store) {
    for (const auto &p : store.all()) add(prefix + p->name, p->shape, p->value);
}

void WeightsArchive::add_adam_state(const std::string &prefix, const ParamStore &store) {
    for (const auto &p : store.all()) {
        if (p->adam_m.empty()) continue;
        add(prefix + p->name + ".m", p->shape, p->adam_m);
        add(prefix + p->name + ".v", p->shape, p->adam_v);
    }
}

const NamedTensor *WeightsArchive::find(const std::string &name) const {
    for (const auto &t : tensors_) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

void WeightsArchive::load_store(const std::string &prefix, ParamStore &store) const {
    for (auto &p : store.all()) {
        const NamedTensor *t = find(prefix + p->name);
        if (!t) throw Error("archive: missing tensor " + prefix + p->name);
        if (!(t->shape == p->shape))
            throw Error("archive: shape mismatch for " + prefix + p->name + ": file " +
                        t->shape.str() + " vs model " + p->shape.str());
        p->value = t->data;
    }
}

void WeightsArchive::load_adam_state(const std::string &prefix, ParamStore &store) const {
    for (auto &p : store.all()) {
        const NamedTensor *m = find(prefix + p->name + ".m");
        const NamedTensor *v = find(prefix + p->name + ".v");
        if (!m || !v) continue;
        p->adam_m = m->data;
        p->adam_v = v->data;
    }
}

void WeightsArchive::save(const std::string &path) const {
    nlohmann::json header;
    header["config"] = config;
    auto &list = header["tensors"] = nlohmann::json::array();
    int64_t offset = 0;
    for (const auto &t : tensors_) {
        nlohmann::json e;
        e["name"] = t.name;
        auto &sh = e["shape"] = nlohmann::json::array();
        for (int i = 0; i < t.shape.rank; ++i) sh.push_back(t.shape[i]);
        e["offset"] = offset;
        e["count"] = t.shape.numel();
        list.push_back(e);
        offset += t.shape.numel();
    }
    const std::string hs = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("archive: cannot open " + path + " for writing");
    os.write(kMagic, 8);
    const uint32_t hlen = static_cast<uint32_t>(hs.size());
    char lb[4] = {static_cast<char>(hlen & 0xff), static_cast<char>((hlen >> 8) & 0xff),
                  static_cast<char>((hlen >> 16) & 0xff), static_cast<char>((hlen >> 24) & 0xff)};
    os.write(lb, 4);
    os.write(hs.data(), hs.size());
    std::vector<float> buf;
    for (const auto &t : tensors_) {
        buf.resize(t.data.size());
        for (size_t i = 0; i < t.data.size(); ++i) buf[i] = static_cast<float>(t.data[i]);
        os.write(reinterpret_cast<const char *>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!os) throw IoError("archive: write failed for " + path);
}

WeightsArchive WeightsArchive::load(const std::string &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("archive: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw Error("archive: " + path + " is not a weight archive");
    unsigned char lb[4];
    is.read(reinterpret_cast<char *>(lb), 4);
    const uint32_t hlen = static_cast<uint32_t>(lb[0]) | (lb[1] << 8) | (lb[2] << 16) |
                          (static_cast<uint32_t>(lb[3]) << 24);
    std::string hs(hlen, '\0');
    is.read(hs.data(), hlen);
    if (!is) throw Error("archive: truncated header in " + path);
    nlohmann::json header = nlohmann::json::parse(hs);

    WeightsArchive a;
    a.config = header.value("config", nlohmann::json::object());
    for (const auto &e : header["tensors"]) {
        NamedTensor t;
        t.name = e["name"].get<std::string>();
        Shape s;
        s.rank = static_cast<int>(e["shape"].size());
        for (int i = 0; i < s.rank; ++i) s.d[i] = e["shape"][i].get<int>();
        t.shape = s;
        const int64_t count = e["count"].get<int64_t>();
        std::vector<float> buf(count);
        is.read(reinterpret_cast<char *>(buf.data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (!is) throw Error("archive: truncated tensor " + t.name + " in " + path);
        t.data.resize(count);
        for (int64_t i = 0; i < count; ++i) t.data[i] = buf[i];
        a.tensors_.push_back(std::move(t));
    }
    return a;
}

} // namespace diformer
