#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "surgtrack/error.hpp"

namespace surgtrack {

using ClassId = int;

/// Class id 0 is reserved for background / no instrument.
inline constexpr ClassId kNoInstrument = 0;

class ClassRegistry {
public:
    ClassRegistry() = default;
    explicit ClassRegistry(std::map<ClassId, std::string> names) : names_(std::move(names))
    {
        for (const auto& [id, name] : names_) {
            if (id <= 0)
                throw InputError("class ids must be positive (0 is background)");
            if (name.empty())
                throw InputError("class names must be non-empty");
        }
    }

    /// The four instrument classes retained for analysis.
    static ClassRegistry standard()
    {
        return ClassRegistry({{1, "BluntDissector"},
                              {2, "CupForceps"},
                              {3, "Kerrisons"},
                              {4, "PituitaryRongeurs"}});
    }

    bool contains(ClassId id) const { return names_.count(id) > 0; }
    std::size_t size() const { return names_.size(); }

    const std::string& name_of(ClassId id) const
    {
        auto it = names_.find(id);
        if (it == names_.end())
            throw InvariantError("class id " + std::to_string(id) + " is not in the registry");
        return it->second;
    }

    std::optional<ClassId> find(const std::string& name) const
    {
        for (const auto& [id, n] : names_)
            if (n == name)
                return id;
        return std::nullopt;
    }

    std::vector<ClassId> ids() const
    {
        std::vector<ClassId> out;
        for (const auto& [id, n] : names_)
            out.push_back(id);
        return out;
    }

    const std::map<ClassId, std::string>& names() const { return names_; }

    bool operator==(const ClassRegistry&) const = default;

private:
    std::map<ClassId, std::string> names_;
};

}  // namespace surgtrack
