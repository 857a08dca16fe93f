#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace gridpse {

enum class BusKind { Slack, Generator, Load, ZeroInjection };

std::string to_string(BusKind kind);
BusKind bus_kind_from_string(const std::string& text);

/// Per-unit bus data. Loads and generation are on the network MVA base.
struct Bus {
    int id = 0;
    BusKind kind = BusKind::Load;
    double base_kv = 1.0;
    double g_shunt = 0.0;  ///< shunt conductance, p.u. at V = 1
    double b_shunt = 0.0;  ///< shunt susceptance B_sh, p.u. at V = 1
    double v_set = 1.0;    ///< scheduled magnitude (slack/generator buses)
    double p_load = 0.0;
    double q_load = 0.0;
    double p_gen = 0.0;

    bool operator==(const Bus&) const = default;
};

/// Series admittance G + jB plus total line charging, split half per terminal.
struct Branch {
    int id = 0;
    int from = 0;
    int to = 0;
    double g = 0.0;
    double b = 0.0;
    double charging = 0.0;
    bool in_service = true;

    bool operator==(const Branch&) const = default;
};

/// Grid topology and parameter database. Buses and branches are addressed by id
/// through the lookup helpers; positions index the stored vectors.
class Network {
public:
    Network() = default;
    Network(std::vector<Bus> buses, std::vector<Branch> branches, double base_mva = 100.0);

    const std::vector<Bus>& buses() const noexcept { return buses_; }
    const std::vector<Branch>& branches() const noexcept { return branches_; }
    double base_mva() const noexcept { return base_mva_; }

    std::size_t bus_count() const noexcept { return buses_.size(); }
    std::size_t branch_count() const noexcept { return branches_.size(); }

    /// Position of a bus id; throws DataError when absent.
    std::size_t bus_position(int id) const;
    std::size_t branch_position(int id) const;
    std::optional<std::size_t> find_bus(int id) const;
    std::optional<std::size_t> find_branch(int id) const;

    const Bus& bus(int id) const { return buses_[bus_position(id)]; }
    const Branch& branch(int id) const { return branches_[branch_position(id)]; }

    /// Position of the unique slack bus; throws DataError when there is not exactly one.
    std::size_t slack_position() const;

    /// In-service branch positions incident to each bus position.
    const std::vector<std::vector<std::size_t>>& incidence() const noexcept { return incidence_; }

    /// Copy with loads and generation scaled by `factor` (multi-period loading).
    Network scaled(double factor) const;

    bool operator==(const Network& other) const {
        return base_mva_ == other.base_mva_ && buses_ == other.buses_ && branches_ == other.branches_;
    }

private:
    void index();

    std::vector<Bus> buses_;
    std::vector<Branch> branches_;
    double base_mva_ = 100.0;
    std::unordered_map<int, std::size_t> bus_pos_;
    std::unordered_map<int, std::size_t> branch_pos_;
    std::vector<std::vector<std::size_t>> incidence_;
};

/// A bus is zero-injection iff load, generation, and shunt are all exactly zero
/// and no generator controls it.
bool is_zero_injection(const Bus& bus);

/// Assigns BusKind::ZeroInjection to every load bus with no load and no shunt.
void mark_zero_injection(std::vector<Bus>& buses);

/// Series admittance of r + jx.
struct Admittance {
    double g;
    double b;
};
Admittance series_admittance(double r, double x);

/// Human-readable invariant violations; empty iff the network is valid.
std::vector<std::string> validate(const Network& network);

/// Throws DataError listing every violation when validate() is non-empty.
void require_valid(const Network& network);

enum class ParameterTarget { BranchSusceptance, BranchConductance, ShuntSusceptance };

std::string to_string(ParameterTarget target);
ParameterTarget parameter_target_from_string(const std::string& text);

/// One unknown network parameter, optionally with a best-known value.
struct UnknownParameter {
    ParameterTarget target = ParameterTarget::BranchSusceptance;
    int element = 0;  ///< branch id or bus id
    std::optional<double> best_known;

    bool operator==(const UnknownParameter&) const = default;
};

using UnknownParameterSet = std::vector<UnknownParameter>;

/// True (database) value of the parameter in `network`.
double parameter_value(const Network& network, const UnknownParameter& parameter);

/// Checks uniqueness of (target, element) and existence of referenced elements.
std::vector<std::string> validate(const Network& network, const UnknownParameterSet& unknowns);

/// Unknown series susceptances for the given branch ids with best-known values from `network`.
UnknownParameterSet unknown_susceptances(const Network& network, const std::vector<int>& branch_ids);
UnknownParameterSet unknown_shunts(const Network& network, const std::vector<int>& bus_ids);

}  // namespace gridpse
