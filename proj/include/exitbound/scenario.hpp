#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <toml.hpp>

#include "exitbound/bound.hpp"
#include "exitbound/diffusion.hpp"
#include "exitbound/errors.hpp"
#include "exitbound/geometry.hpp"
#include "exitbound/pde.hpp"
#include "exitbound/sde.hpp"

namespace exitbound {

struct ProcessDecl {
    std::vector<std::string> drift;
    std::vector<std::vector<std::string>> diffusion;
    Vec start;
    DiffusionSpec spec;
    EllipticityReport ellipticity;
};

struct GridDecl {
    std::size_t resolution = 1001;
    /// Number of halvings of h used by the convergence study.
    std::size_t refinements = 3;
};

struct McDecl {
    std::size_t replicates = 100000;
    double dt = 1e-4;
    /// Unset: 50 * max(v1(a1), v2(a2)) from the solved fields.
    std::optional<double> t_max;
    bool bridge_correction = false;
    Coupling coupling = Coupling::Shared;
    std::uint64_t base_seed = 0;
};

struct OutputDecl {
    std::string directory = "out";
    bool dump_replicates = false;
};

/// Time-step study run by the convergence command: dt, dt/4, dt/16, ...
struct ConvergenceDecl {
    double dt = 1e-2;
    std::size_t replicates = 40000;
    std::size_t levels = 3;
};

struct Scenario {
    std::string name;
    Region region{Interval{0.0, 1.0}};
    std::vector<ProcessDecl> processes;
    GridDecl grid;
    McDecl mc;
    OutputDecl output;
    ConvergenceDecl convergence;
    bool allow_degenerate = false;
    double lambda_min = 1e-6;
    std::filesystem::path source;

    [[nodiscard]] const ProcessDecl& process(int i) const { return processes.at(static_cast<std::size_t>(i - 1)); }

    [[nodiscard]] PathConfig path_config(double t_max) const {
        PathConfig c;
        c.dt = mc.dt;
        c.t_max = t_max;
        c.bridge_correction = mc.bridge_correction;
        c.base_seed = mc.base_seed;
        c.coupling = mc.coupling;
        return c;
    }
};

namespace detail {

/// Reads typed fields out of a TOML table, naming the offending field in
/// every error.
class FieldReader {
public:
    FieldReader(const toml::table& table, std::string prefix, std::string file)
        : table_(table), prefix_(std::move(prefix)), file_(std::move(file)) {}

    void allow_only(std::initializer_list<std::string_view> keys) const {
        const std::set<std::string_view> allowed(keys);
        for (const auto& [k, node] : table_) {
            if (!allowed.count(k.str())) fail(std::string(k.str()), "unknown key", node);
        }
    }

    [[nodiscard]] bool has(std::string_view key) const { return table_.contains(key); }

    [[nodiscard]] const toml::node& node(std::string_view key) const {
        const toml::node* n = table_.get(key);
        if (!n) throw InputError(where(std::string(key)) + ": missing required field");
        return *n;
    }

    [[nodiscard]] double number(std::string_view key) const {
        const auto& n = node(key);
        if (const auto v = n.value<double>(); v && (n.is_floating_point() || n.is_integer())) {
            if (!std::isfinite(*v)) fail(key, "must be finite", n);
            return *v;
        }
        fail(key, "expected a number", n);
    }

    [[nodiscard]] double number_or(std::string_view key, double fallback) const {
        return has(key) ? number(key) : fallback;
    }

    [[nodiscard]] double positive(std::string_view key, double fallback) const {
        const double v = number_or(key, fallback);
        if (!(v > 0.0)) fail(key, "must be positive", node_or_table(key));
        return v;
    }

    [[nodiscard]] std::uint64_t count(std::string_view key, std::uint64_t fallback) const {
        if (!has(key)) return fallback;
        const auto& n = node(key);
        const double v = number(key);
        if (v < 0.0 || v != std::floor(v) || v > 9.007199254740992e15) {
            fail(key, "expected a non-negative integer", n);
        }
        return static_cast<std::uint64_t>(v);
    }

    [[nodiscard]] bool boolean(std::string_view key, bool fallback) const {
        if (!has(key)) return fallback;
        const auto& n = node(key);
        if (!n.is_boolean()) fail(key, "expected true or false", n);
        return *n.value<bool>();
    }

    [[nodiscard]] std::string string(std::string_view key) const {
        const auto& n = node(key);
        if (!n.is_string()) fail(key, "expected a quoted string", n);
        return *n.value<std::string>();
    }

    [[nodiscard]] std::string string_or(std::string_view key, std::string fallback) const {
        return has(key) ? string(key) : fallback;
    }

    /// A number or an array of numbers.
    [[nodiscard]] Vec numbers(std::string_view key) const {
        const auto& n = node(key);
        if (n.is_integer() || n.is_floating_point()) return {number(key)};
        const auto* arr = n.as_array();
        if (!arr || arr->empty()) fail(key, "expected a number or a nonempty array of numbers", n);
        Vec out;
        for (const auto& e : *arr) {
            const auto v = e.value<double>();
            if (!v || !(e.is_integer() || e.is_floating_point()) || !std::isfinite(*v)) {
                fail(key, "array elements must be finite numbers", e);
            }
            out.push_back(*v);
        }
        return out;
    }

    /// A string or an array of strings.
    [[nodiscard]] std::vector<std::string> strings(std::string_view key, const toml::node& n) const {
        if (n.is_string()) return {*n.value<std::string>()};
        const auto* arr = n.as_array();
        if (!arr || arr->empty()) fail(key, "expected a string or a nonempty array of strings", n);
        std::vector<std::string> out;
        for (const auto& e : *arr) {
            if (!e.is_string()) fail(key, "expected quoted expression strings", e);
            out.push_back(*e.value<std::string>());
        }
        return out;
    }

    [[noreturn]] void fail(std::string_view key, const std::string& what, const toml::node& at) const {
        std::ostringstream os;
        os << where(std::string(key)) << ": " << what;
        const auto& pos = at.source().begin;
        if (pos.line) os << " (" << file_ << ':' << pos.line << ':' << pos.column << ')';
        throw InputError(os.str());
    }

    [[nodiscard]] std::string where(const std::string& key) const {
        return "field '" + (prefix_.empty() ? key : prefix_ + "." + key) + "'";
    }

    [[nodiscard]] const toml::table& table() const noexcept { return table_; }

private:
    const toml::node& node_or_table(std::string_view key) const {
        const toml::node* n = table_.get(key);
        return n ? *n : static_cast<const toml::node&>(table_);
    }

    const toml::table& table_;
    std::string prefix_;
    std::string file_;
};

inline const toml::table& sub_table(const toml::table& root, std::string_view key, const std::string& file,
                                    bool required) {
    static const toml::table empty;
    const toml::node* n = root.get(key);
    if (!n) {
        if (required) throw InputError("field '" + std::string(key) + "': missing required section");
        return empty;
    }
    if (!n->is_table()) FieldReader(root, "", file).fail(key, "expected a table", *n);
    return *n->as_table();
}

inline Region parse_region(const FieldReader& r) {
    const std::string kind = r.string("kind");
    try {
        if (kind == "interval") {
            r.allow_only({"kind", "lo", "hi"});
            return Region(Interval{r.number("lo"), r.number("hi")});
        }
        if (kind == "box") {
            r.allow_only({"kind", "lo", "hi"});
            return Region(Box{r.numbers("lo"), r.numbers("hi")});
        }
        if (kind == "ball") {
            r.allow_only({"kind", "center", "radius"});
            return Region(Ball{r.numbers("center"), r.number("radius")});
        }
    } catch (const InputError& e) {
        const std::string msg = e.what();
        if (msg.rfind("field '", 0) == 0) throw;
        r.fail("kind", msg, r.table());
    }
    r.fail("kind", "expected \"interval\", \"box\" or \"ball\"", r.node("kind"));
}

inline ProcessDecl parse_process(const FieldReader& r, const std::string& label, const Region& region) {
    r.allow_only({"drift", "diffusion", "start"});
    const std::vector<std::string> drift = r.strings("drift", r.node("drift"));
    std::vector<std::vector<std::string>> rows;
    const auto& dn = r.node("diffusion");
    if (const auto* arr = dn.as_array(); arr && !arr->empty() && arr->front().is_array()) {
        for (const auto& row : *arr) rows.push_back(r.strings("diffusion", row));
    } else if (drift.size() == 1) {
        // 1D shorthand: diffusion = "1" or ["1", "0.5"] is the single row.
        rows.push_back(r.strings("diffusion", dn));
    } else {
        r.fail("diffusion", "expected an array of rows, one per drift component", dn);
    }
    if (drift.size() != region.dim()) {
        r.fail("drift", "has " + std::to_string(drift.size()) + " components, region has dimension " +
                            std::to_string(region.dim()),
               r.node("drift"));
    }
    Vec start = r.numbers("start");
    if (start.size() != region.dim()) r.fail("start", "dimension does not match the region", r.node("start"));
    if (!region.in_closure(start)) r.fail("start", "start outside closure of the region", r.node("start"));
    try {
        DiffusionSpec spec = DiffusionSpec::from_strings(drift, rows, label);
        return ProcessDecl{drift, rows, std::move(start), std::move(spec), {}};
    } catch (const SyntaxError& e) {
        r.fail("drift/diffusion", e.what(), r.node("drift"));
    } catch (const InputError& e) {
        r.fail("diffusion", e.what(), dn);
    }
}

}  // namespace detail

/// Parses and validates a scenario from TOML text. `file` is used in
/// error locations only.
inline Scenario parse_scenario(std::string_view text, const std::string& file = "<scenario>") {
    toml::table root;
    try {
        root = toml::parse(text, file);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << file << ':' << e.source().begin.line << ':' << e.source().begin.column << ": " << e.description();
        throw InputError(os.str());
    }
    const detail::FieldReader top(root, "", file);
    top.allow_only({"name", "region", "allow_degenerate", "lambda_min", "process1", "process2", "grid", "mc",
                    "output", "convergence"});

    Scenario s;
    s.name = top.string("name");
    s.allow_degenerate = top.boolean("allow_degenerate", false);
    s.lambda_min = top.positive("lambda_min", 1e-6);
    s.region = detail::parse_region(detail::FieldReader(detail::sub_table(root, "region", file, true), "region", file));

    for (int i = 1; i <= 2; ++i) {
        const std::string key = "process" + std::to_string(i);
        const detail::FieldReader r(detail::sub_table(root, key, file, true), key, file);
        s.processes.push_back(detail::parse_process(r, key, s.region));
    }

    {
        const detail::FieldReader r(detail::sub_table(root, "grid", file, false), "grid", file);
        r.allow_only({"resolution", "refinements"});
        s.grid.resolution = r.count("resolution", s.grid.resolution);
        s.grid.refinements = r.count("refinements", s.grid.refinements);
        if (s.grid.resolution < 9) r.fail("resolution", "must be at least 9", r.node("resolution"));
        if (s.grid.refinements < 2) r.fail("refinements", "must be at least 2", r.node("refinements"));
        if (s.grid.refinements > 10 || (s.grid.resolution - 1) % (std::size_t{1} << s.grid.refinements) != 0 ||
            (s.grid.resolution - 1) >> s.grid.refinements < 8) {
            r.fail("refinements", "resolution - 1 must be divisible by 2^refinements with at least 8 cells left",
                   r.has("refinements") ? r.node("refinements") : r.node("resolution"));
        }
    }

    {
        const detail::FieldReader r(detail::sub_table(root, "mc", file, false), "mc", file);
        r.allow_only({"replicates", "dt", "t_max", "bridge_correction", "coupling", "base_seed"});
        s.mc.replicates = r.count("replicates", s.mc.replicates);
        if (s.mc.replicates < kMinReplicates) {
            r.fail("replicates", "must be at least " + std::to_string(kMinReplicates),
                   r.node("replicates"));
        }
        s.mc.dt = r.positive("dt", s.mc.dt);
        if (r.has("t_max")) {
            s.mc.t_max = r.positive("t_max", 1.0);
            if (s.mc.dt > *s.mc.t_max / 10.0) r.fail("dt", "must not exceed t_max / 10", r.node("dt"));
        }
        s.mc.bridge_correction = r.boolean("bridge_correction", false);
        const std::string coupling = r.string_or("coupling", "shared");
        if (coupling == "shared") {
            s.mc.coupling = Coupling::Shared;
        } else if (coupling == "independent") {
            s.mc.coupling = Coupling::Independent;
        } else {
            r.fail("coupling", "expected \"shared\" or \"independent\"", r.node("coupling"));
        }
        s.mc.base_seed = r.count("base_seed", 0);
    }

    {
        const detail::FieldReader r(detail::sub_table(root, "output", file, false), "output", file);
        r.allow_only({"directory", "dump_replicates"});
        s.output.directory = r.string_or("directory", s.output.directory);
        s.output.dump_replicates = r.boolean("dump_replicates", false);
    }

    {
        const detail::FieldReader r(detail::sub_table(root, "convergence", file, false), "convergence", file);
        r.allow_only({"dt", "replicates", "levels"});
        s.convergence.dt = r.positive("dt", s.convergence.dt);
        s.convergence.replicates = r.count("replicates", s.convergence.replicates);
        s.convergence.levels = r.count("levels", s.convergence.levels);
        if (s.convergence.levels < 2 || s.convergence.levels > 8) {
            r.fail("levels", "must be between 2 and 8", r.node("levels"));
        }
        if (s.convergence.replicates < kMinReplicates) {
            r.fail("replicates", "must be at least " + std::to_string(kMinReplicates),
                   r.node("replicates"));
        }
    }

    const auto& p1 = s.processes[0].spec;
    const auto& p2 = s.processes[1].spec;
    if (s.mc.coupling == Coupling::Shared && p1.d() != p2.d()) {
        throw InputError("field 'process2.diffusion': shared coupling needs the same noise dimension d as process1 (" +
                         std::to_string(p1.d()) + " vs " + std::to_string(p2.d()) + ")");
    }

    for (auto& p : s.processes) {
        p.ellipticity = check_ellipticity(p.spec, s.region, 1000, s.lambda_min);
        if (!p.ellipticity.pass && !s.allow_degenerate) {
            std::ostringstream os;
            os << "field '" << p.spec.label() << ".diffusion': ellipticity FAIL: min eigenvalue of beta beta^T is "
               << p.ellipticity.min_eigenvalue << " at " << detail::format_point(p.ellipticity.argmin)
               << ", below lambda_min = " << s.lambda_min << " (set allow_degenerate = true to proceed)";
            throw InputError(os.str());
        }
    }
    return s;
}

/// Reads and validates a scenario file.
inline Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open scenario file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    Scenario s = parse_scenario(buf.str(), path.string());
    s.source = path;
    return s;
}

}  // namespace exitbound
