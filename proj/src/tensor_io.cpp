#include "reeflora/tensor.hpp"

#include <json.hpp>

namespace reeflora {

TensorBlockHeader read_tensor_header(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw IoError("missing tensor block header");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed tensor header: ") + e.what());
    }
    TensorBlockHeader h;
    h.dtype = j.at("dtype").get<std::string>();
    if (j.at("order").get<std::string>() != "little") {
        throw IoError("tensor payload byte order must be little-endian");
    }
    for (const auto& d : j.at("shape")) h.shape.push_back(d.get<std::int64_t>());
    return h;
}

}  // namespace reeflora
