#include "reeflora/labels.hpp"

#include <algorithm>
#include <cctype>

namespace reeflora {

int class_index(const std::string& name) {
    std::string upper = name;
    std::transform(upper.begin(), upper.end(), upper.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    for (int i = 0; i < kNumClasses; ++i) {
        if (upper == kClassNames[static_cast<std::size_t>(i)]) return i;
    }
    return -1;
}

}  // namespace reeflora
