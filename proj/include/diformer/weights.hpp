#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "diformer/tensor.hpp"

namespace diformer {

// Weight archive layout:
//   bytes 0..7   magic "DIFW0001"
//   bytes 8..11  u32 LE header length H
//   bytes 12..   H bytes of JSON: {"config": {...}, "tensors": [
//                  {"name": str, "shape": [ints], "offset": int, "count": int}, ...]}
//   then the tensor payload: raw little-endian float32 values, concatenated in
//   the order listed; offset/count are in float32 elements.
//
// The same container is used for encoder weights, diarizer checkpoints and
// optimizer state.

struct NamedTensor {
    std::string name;
    Shape shape;
    std::vector<double> data;
};

class WeightsArchive {
public:
    nlohmann::json config;

    void add(const std::string &name, const Shape &shape, const std::vector<double> &data);
    // Adds every parameter of the store as "<prefix><param name>".
    void add_store(const std::string &prefix, const ParamStore &store);
    // Adds Adam moments as "<prefix><param name>.m" / ".v" for resume.
    void add_adam_state(const std::string &prefix, const ParamStore &store);

    const NamedTensor *find(const std::string &name) const;
    bool has(const std::string &name) const { return find(name) != nullptr; }

    // Copies "<prefix><param name>" into each parameter; throws Error on a
    // missing tensor or shape mismatch.
    void load_store(const std::string &prefix, ParamStore &store) const;
    void load_adam_state(const std::string &prefix, ParamStore &store) const;

    void save(const std::string &path) const;
    static WeightsArchive load(const std::string &path);

    const std::vector<NamedTensor> &tensors() const { return tensors_; }

private:
    std::vector<NamedTensor> tensors_;
};

} // namespace diformer
