#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace kalikow {

// Cylindrical kernels p^v. Each receives exactly the bits x_v, ordered like
// the sites of its neighborhood, so cylindricity holds by construction.

/// intercept + sum_k slopes[k] * x_k
struct LinearKernel {
    double intercept = 0.0;
    std::vector<double> slopes;

    friend bool operator==(const LinearKernel&, const LinearKernel&) = default;
};

/// Augmented-set kernel of the linear GL model, with gate = prod_{k != src} (1 - x_k)
/// (the target stayed silent since the source site):
///   excitatory: x_src * gate
///   inhibitory: 1 - x_src * gate
/// The inhibitory form keeps the mixture equal to the GL transition also when
/// the gate is closed.
struct GatedKernel {
    std::size_t source = 0;
    bool inhibitory = false;

    friend bool operator==(const GatedKernel&, const GatedKernel&) = default;
};

/// Full truth table; index = sum_k x_k << k.
struct TableKernel {
    std::vector<double> values;

    friend bool operator==(const TableKernel&, const TableKernel&) = default;
};

/// Arbitrary user kernel. Not serializable.
struct FunctionKernel {
    std::string name;
    std::function<double(std::span<const std::uint8_t>)> fn;

    friend bool operator==(const FunctionKernel& a, const FunctionKernel& b) { return a.name == b.name; }
};

class Kernel {
public:
    using Variant = std::variant<LinearKernel, GatedKernel, TableKernel, FunctionKernel>;

    Kernel() : impl_(LinearKernel{}) {}
    Kernel(LinearKernel k) : impl_(std::move(k)) {}
    Kernel(GatedKernel k) : impl_(k) {}
    Kernel(TableKernel k) : impl_(std::move(k)) {}
    Kernel(FunctionKernel k) : impl_(std::move(k)) {}

    static Kernel constant(double p) { return LinearKernel{p, {}}; }

    double operator()(std::span<const std::uint8_t> bits) const {
        return std::visit([&](const auto& k) { return eval(k, bits); }, impl_);
    }

    const Variant& variant() const { return impl_; }

    friend bool operator==(const Kernel&, const Kernel&) = default;

private:
    static double eval(const LinearKernel& k, std::span<const std::uint8_t> bits) {
        double p = k.intercept;
        for (std::size_t i = 0; i < k.slopes.size(); ++i) p += k.slopes[i] * bits[i];
        return p;
    }
    static double eval(const GatedKernel& k, std::span<const std::uint8_t> bits) {
        bool open = true;
        for (std::size_t i = 0; i < bits.size(); ++i) {
            if (i != k.source && bits[i] != 0) open = false;
        }
        const double fired = (open && bits[k.source] != 0) ? 1.0 : 0.0;
        return k.inhibitory ? 1.0 - fired : fired;
    }
    static double eval(const TableKernel& k, std::span<const std::uint8_t> bits) {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < bits.size(); ++i) idx |= static_cast<std::size_t>(bits[i] != 0) << i;
        return k.values.at(idx);
    }
    static double eval(const FunctionKernel& k, std::span<const std::uint8_t> bits) { return k.fn(bits); }

    Variant impl_;
};

}  // namespace kalikow
