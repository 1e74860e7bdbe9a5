#include "apdlh/fault.hpp"

namespace apdlh {

std::string_view to_string(FaultClass c) noexcept {
    switch (c) {
        case FaultClass::MeshFail: return "MeshFail";
        case FaultClass::ConvFail: return "ConvFail";
        case FaultClass::ElemTypeFail: return "ElemTypeFail";
        case FaultClass::MissingResults: return "MissingResults";
        case FaultClass::HardGeom: return "HardGeom";
        case FaultClass::Unknown: return "Unknown";
    }
    return "Unknown";
}

std::optional<FaultClass> parse_fault_class(std::string_view s) noexcept {
    for (auto c : {FaultClass::MeshFail, FaultClass::ConvFail, FaultClass::ElemTypeFail,
                   FaultClass::MissingResults, FaultClass::HardGeom, FaultClass::Unknown}) {
        if (to_string(c) == s) return c;
    }
    return std::nullopt;
}

std::string_view to_string(Category c) noexcept {
    switch (c) {
        case Category::Static: return "static";
        case Category::Modal: return "modal";
        case Category::Thermal: return "thermal";
    }
    return "static";
}

std::optional<Category> parse_category(std::string_view s) noexcept {
    for (auto c : kCategories) {
        if (to_string(c) == s) return c;
    }
    return std::nullopt;
}

}  // namespace apdlh
