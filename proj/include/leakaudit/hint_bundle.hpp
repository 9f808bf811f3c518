#pragma once

#include <string>
#include <vector>

#include "leakaudit/common.hpp"

namespace leakaudit {

// Library entries handed to a test-generation prompt as formatting guidance.
struct HintBundle {
    struct Entry {
        std::string attribute;
        std::string text;
    };
    std::vector<Entry> templates;
    std::vector<Entry> fragments;

    bool empty() const { return templates.empty() && fragments.empty(); }
    void append(const HintBundle& other);
    json to_json() const;
    static HintBundle from_json(const json& j);
};

}  // namespace leakaudit
