#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace apdlh {

// Solver failure classes. The enumerator order is the order in which the
// simulated backend evaluates fault predicates.
enum class FaultClass { MeshFail, ConvFail, ElemTypeFail, MissingResults, HardGeom, Unknown };

inline constexpr std::array<FaultClass, 5> kInjectableFaults = {
    FaultClass::MeshFail, FaultClass::ConvFail, FaultClass::ElemTypeFail,
    FaultClass::MissingResults, FaultClass::HardGeom};

std::string_view to_string(FaultClass c) noexcept;
std::optional<FaultClass> parse_fault_class(std::string_view s) noexcept;

enum class Category { Static, Modal, Thermal };

inline constexpr std::array<Category, 3> kCategories = {Category::Static, Category::Modal,
                                                        Category::Thermal};

// Lowercase, as serialized in corpus files.
std::string_view to_string(Category c) noexcept;
std::optional<Category> parse_category(std::string_view s) noexcept;

}  // namespace apdlh
