#include "reeflora/lora.hpp"

#include <sstream>

#include "reeflora/errors.hpp"

namespace reeflora {

const char* lora_target_name(LoraTarget t) {
    switch (t) {
        case LoraTarget::query: return "query";
        case LoraTarget::key: return "key";
        case LoraTarget::value: return "value";
        case LoraTarget::output: return "output";
        case LoraTarget::mlp: return "mlp";
    }
    return "?";
}

LoraTarget lora_target_from_name(const std::string& name) {
    if (name == "query") return LoraTarget::query;
    if (name == "key") return LoraTarget::key;
    if (name == "value") return LoraTarget::value;
    if (name == "output") return LoraTarget::output;
    if (name == "mlp") return LoraTarget::mlp;
    throw ConfigError("unknown lora target '" + name +
                      "' (expected query, key, value, output or mlp)");
}

std::string LoraConfig::targets_string() const {
    std::string out;
    for (LoraTarget t : targets) {
        if (!out.empty()) out += ",";
        out += lora_target_name(t);
    }
    return out;
}

std::set<LoraTarget> LoraConfig::parse_targets(const std::string& csv) {
    std::set<LoraTarget> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto begin = item.find_first_not_of(" \t");
        if (begin == std::string::npos) continue;
        const auto end = item.find_last_not_of(" \t");
        out.insert(lora_target_from_name(item.substr(begin, end - begin + 1)));
    }
    if (out.empty()) throw ConfigError("lora targets list is empty");
    return out;
}

void LoraConfig::validate() const {
    if (rank < 0) throw ConfigError("lora rank must be >= 0");
    if (alpha == 0.0) throw ConfigError("lora alpha must be positive (or negative for auto)");
    if (rank > 0 && targets.empty()) {
        throw ConfigError("lora rank > 0 requires at least one target projection");
    }
}

}  // namespace reeflora
