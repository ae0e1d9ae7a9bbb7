#ifndef LRW_SCENARIO_HPP
#define LRW_SCENARIO_HPP

#include "lrw/consensus.hpp"
#include "lrw/core.hpp"
#include "lrw/metrics.hpp"
#include "lrw/neighbor_ops.hpp"
#include "lrw/simnet.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace lrw {

// Flat key = value text grouped under [section] headers. '#' starts a comment.
// Every key must be consumed by the loader, so typos surface as errors.
class ConfigFile {
public:
    static ConfigFile parse(std::string_view text)
    {
        ConfigFile cfg;
        std::string section;
        int line_no = 0;
        std::istringstream in{std::string(text)};
        for (std::string line; std::getline(in, line);) {
            ++line_no;
            if (auto hash = line.find('#'); hash != std::string::npos)
                line.erase(hash);
            const std::string s = trim(line);
            if (s.empty())
                continue;
            if (s.front() == '[') {
                if (s.back() != ']')
                    fail(line_no, "unterminated section header");
                section = trim(s.substr(1, s.size() - 2));
                cfg.sections_[section];
                continue;
            }
            const auto eq = s.find('=');
            if (eq == std::string::npos)
                fail(line_no, "expected key = value");
            if (section.empty())
                fail(line_no, "key outside of any [section]");
            const std::string key = trim(s.substr(0, eq));
            auto [it, fresh] = cfg.sections_[section].emplace(key, Entry{trim(s.substr(eq + 1)), line_no});
            if (!fresh)
                fail(line_no, "duplicate key " + section + "." + key);
        }
        return cfg;
    }

    std::optional<std::string> take(const std::string& section, const std::string& key) const
    {
        auto s = sections_.find(section);
        if (s == sections_.end())
            return std::nullopt;
        auto e = s->second.find(key);
        if (e == s->second.end())
            return std::nullopt;
        e->second.used = true;
        return e->second.value;
    }

    int line_of(const std::string& section, const std::string& key) const
    {
        auto s = sections_.find(section);
        if (s == sections_.end())
            return 0;
        auto e = s->second.find(key);
        return e == s->second.end() ? 0 : e->second.line;
    }

    void require_all_used() const
    {
        for (const auto& [section, entries] : sections_)
            for (const auto& [key, e] : entries)
                if (!e.used)
                    fail(e.line, "unknown key " + section + "." + key);
    }

    [[noreturn]] static void fail(int line, const std::string& what)
    {
        throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(line) + ": " + what);
    }

    static std::string trim(std::string_view s)
    {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string_view::npos)
            return {};
        const auto e = s.find_last_not_of(" \t\r");
        return std::string(s.substr(b, e - b + 1));
    }

private:
    struct Entry {
        std::string value;
        int line = 0;
        mutable bool used = false;
    };
    std::map<std::string, std::map<std::string, Entry>> sections_;
};

namespace cfgval {

inline std::vector<std::string> split(const std::string& v)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ','))
        if (auto t = ConfigFile::trim(item); !t.empty())
            out.push_back(t);
    return out;
}

inline double number(const std::string& v, const std::string& what)
{
    double x = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw Error(ErrorCode::InvalidConfig, what + ": not a number: '" + v + "'");
    return x;
}

inline std::uint64_t whole(const std::string& v, const std::string& what)
{
    std::uint64_t x = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw Error(ErrorCode::InvalidConfig, what + ": not a non-negative integer: '" + v + "'");
    return x;
}

inline bool flag(const std::string& v, const std::string& what)
{
    if (v == "true" || v == "1" || v == "yes" || v == "on")
        return true;
    if (v == "false" || v == "0" || v == "no" || v == "off")
        return false;
    throw Error(ErrorCode::InvalidConfig, what + ": not a boolean: '" + v + "'");
}

// "1..11" expands to 1,2,...,11; "100..350/50" steps by 50.
inline std::vector<std::uint64_t> whole_list(const std::string& v, const std::string& what)
{
    std::vector<std::uint64_t> out;
    for (const auto& item : split(v)) {
        const auto dots = item.find("..");
        if (dots == std::string::npos) {
            out.push_back(whole(item, what));
            continue;
        }
        std::string hi_part = item.substr(dots + 2);
        std::uint64_t step = 1;
        if (auto slash = hi_part.find('/'); slash != std::string::npos) {
            step = whole(hi_part.substr(slash + 1), what);
            hi_part.erase(slash);
        }
        const auto lo = whole(item.substr(0, dots), what);
        const auto hi = whole(hi_part, what);
        if (step == 0 || hi < lo)
            throw Error(ErrorCode::InvalidConfig, what + ": bad range '" + item + "'");
        for (auto x = lo; x <= hi; x += step)
            out.push_back(x);
    }
    return out;
}

inline std::vector<double> number_list(const std::string& v, const std::string& what)
{
    std::vector<double> out;
    for (const auto& item : split(v))
        out.push_back(number(item, what));
    return out;
}

} // namespace cfgval

enum class RunMode { Lrw, ReadAll, WriteAll, Transact, Costs, Consensus };

constexpr std::string_view to_string(RunMode m)
{
    switch (m) {
    case RunMode::Lrw: return "lrw";
    case RunMode::ReadAll: return "read_all";
    case RunMode::WriteAll: return "write_all";
    case RunMode::Transact: return "transact";
    case RunMode::Costs: return "costs";
    case RunMode::Consensus: return "consensus";
    }
    return "?";
}

// Fits loss_prob against a target reliability curve on a reference scenario
// (one initiator at the center of a star).
struct CalibrationSpec {
    std::vector<double> timeouts_ms{50, 75, 100};
    std::vector<double> target_pct{46.64, 96.87, 100.0};
    double lo = 0.0;
    double hi = 0.5;
    std::size_t trials = 250;
    std::uint64_t seed = 1;
    std::size_t neighbors = 6;
    double commit_factor = 2.0;
    // Feasibility: shortest timeout below low_pct, longest at or above high_pct.
    double low_pct = 90.0;
    double high_pct = 99.5;
    int bisect_steps = 14;
    std::size_t scan_points = 41;
};

struct CalibrationResult {
    double loss_prob = 0.0;
    std::vector<double> reliability_pct;
    double feasible_lo = 0.0;
    double feasible_hi = 0.0;
    bool shape_matched = false;
    std::size_t evaluations = 0;
};

namespace detail {

inline std::vector<double> reliability_curve(const CalibrationSpec& spec, const RadioModel& radio,
                                             const TimerConfig& timers, double loss)
{
    std::vector<double> out;
    for (double t : spec.timeouts_ms) {
        ScenarioConfig c;
        c.topology = TopologySpec{TopologyKind::Star, spec.neighbors, 3, {}};
        c.initiators.select = InitiatorSelect::Center;
        c.radio = radio;
        c.radio.loss_prob = loss;
        c.timers = timers;
        c.timers.timeout = from_ms(t);
        c.timers.commit = from_ms(t * spec.commit_factor);
        c.trials = spec.trials;
        c.seed = spec.seed;
        out.push_back(reliability(extract_ops(run_scenario(c))));
    }
    return out;
}

inline bool strictly_increasing(const std::vector<double>& v)
{
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1]))
            return false;
    return true;
}

} // namespace detail

// 1. Bisect for the feasible loss interval: the shortest timeout below
//    low_pct and the longest at or above high_pct.
// 2. Scan that interval and keep the loss whose curve matches the target's
//    shape (strictly increasing, same endpoint when the target ends at 100%)
//    with the smallest squared error; if no point matches the shape, the
//    smallest error overall.
// Reliability is evaluated with common random numbers (same seed) at every loss.
inline CalibrationResult calibrate_loss(const CalibrationSpec& spec, const RadioModel& radio = {},
                                        const TimerConfig& timers = {})
{
    if (spec.timeouts_ms.empty() || spec.timeouts_ms.size() != spec.target_pct.size())
        throw Error(ErrorCode::InvalidConfig, "calibration needs one target per timeout");
    if (!detail::strictly_increasing(spec.timeouts_ms))
        throw Error(ErrorCode::InvalidConfig, "calibration timeouts must increase");
    for (std::size_t i = 1; i < spec.target_pct.size(); ++i)
        if (spec.target_pct[i] < spec.target_pct[i - 1])
            throw Error(ErrorCode::InvalidConfig, "calibration target curve must be monotone");
    if (!(spec.lo >= 0.0 && spec.lo < spec.hi && spec.hi <= 1.0))
        throw Error(ErrorCode::InvalidConfig, "calibration bounds must satisfy 0 <= lo < hi <= 1");

    CalibrationResult res;
    auto curve = [&](double loss) {
        ++res.evaluations;
        return detail::reliability_curve(spec, radio, timers, loss);
    };
    auto low_ok = [&](const std::vector<double>& c) { return c.front() < spec.low_pct; };
    auto high_ok = [&](const std::vector<double>& c) { return c.back() >= spec.high_pct; };

    if (!low_ok(curve(spec.hi)))
        throw Error(ErrorCode::NoFeasiblePoint, "shortest timeout stays above the low threshold up to loss " +
                                                    std::to_string(spec.hi));
    double a = spec.lo, b = spec.hi; // low_ok(b) holds
    if (low_ok(curve(a))) {
        b = a;
    } else {
        for (int i = 0; i < spec.bisect_steps; ++i) {
            const double m = 0.5 * (a + b);
            (low_ok(curve(m)) ? b : a) = m;
        }
    }
    const double feasible_lo = b;
    if (!high_ok(curve(feasible_lo)))
        throw Error(ErrorCode::NoFeasiblePoint, "no loss in [" + std::to_string(spec.lo) + ", " +
                                                    std::to_string(spec.hi) + "] satisfies both thresholds");
    a = feasible_lo;
    b = spec.hi;
    if (high_ok(curve(b))) {
        a = b;
    } else {
        for (int i = 0; i < spec.bisect_steps; ++i) {
            const double m = 0.5 * (a + b);
            (high_ok(curve(m)) ? a : b) = m;
        }
    }
    const double feasible_hi = a;

    const bool target_full = spec.target_pct.back() >= 100.0;
    std::optional<std::pair<std::pair<int, double>, double>> best; // ((shape miss, error), loss)
    std::vector<double> best_curve;
    const std::size_t n = std::max<std::size_t>(spec.scan_points, 2);
    for (std::size_t i = 0; i < n; ++i) {
        const double loss = feasible_lo + (feasible_hi - feasible_lo) * static_cast<double>(i) / static_cast<double>(n - 1);
        const auto c = curve(loss);
        if (!low_ok(c) || !high_ok(c))
            continue;
        const bool shape = detail::strictly_increasing(c) && (!target_full || c.back() >= 100.0);
        double err = 0.0;
        for (std::size_t j = 0; j < c.size(); ++j)
            err += (c[j] - spec.target_pct[j]) * (c[j] - spec.target_pct[j]);
        const std::pair<int, double> score{shape ? 0 : 1, err};
        if (!best || score < best->first) {
            best = std::pair{score, loss};
            best_curve = c;
        }
    }
    if (!best) {
        best = std::pair{std::pair{1, 0.0}, feasible_lo};
        best_curve = curve(feasible_lo);
    }
    res.loss_prob = best->second;
    res.reliability_pct = best_curve;
    res.feasible_lo = feasible_lo;
    res.feasible_hi = feasible_hi;
    res.shape_matched = best->first.first == 0;
    return res;
}

// Memoized calibrate_loss: presets sharing a calibration run it once per process.
inline CalibrationResult calibrate_loss_cached(const CalibrationSpec& spec, const RadioModel& radio,
                                               const TimerConfig& timers)
{
    static std::mutex mu;
    static std::map<std::string, CalibrationResult> cache;
    std::ostringstream key;
    key.precision(17);
    for (double t : spec.timeouts_ms)
        key << t << ',';
    key << '|';
    for (double t : spec.target_pct)
        key << t << ',';
    key << '|' << spec.lo << ',' << spec.hi << ',' << spec.trials << ',' << spec.seed << ',' << spec.neighbors << ','
        << spec.commit_factor << ',' << spec.low_pct << ',' << spec.high_pct << ',' << spec.bisect_steps << ','
        << spec.scan_points << '|' << radio.mac_delay_lo.count() << ',' << radio.mac_delay_hi.count() << ','
        << radio.processing.count() << ',' << timers.response.count();
    std::lock_guard lock(mu);
    if (auto it = cache.find(key.str()); it != cache.end())
        return it->second;
    auto res = calibrate_loss(spec, radio, timers);
    cache.emplace(key.str(), res);
    return res;
}

struct Experiment {
    std::string name = "scenario";
    RunMode mode = RunMode::Lrw;
    std::string note;
    ScenarioConfig base;
    std::vector<std::optional<Micros>> timeouts; // nullopt: infinite
    double commit_factor = 2.0;
    std::optional<Micros> commit;
    std::vector<std::size_t> neighbors; // sweep over topology size; empty: topology.size
    std::vector<Transport> transports{Transport::Broadcast};
    bool calibrate = false;
    CalibrationSpec calibration;
    double histogram_bin_ms = 20.0;
    std::vector<std::size_t> read_sizes{1, 2, 3, 4, 5, 6};
    std::vector<std::size_t> write_sizes{1, 2, 3, 4, 5, 6};
    std::vector<Value> consensus_inputs{0, 1};
    std::size_t consensus_nodes = 2;
};

inline Experiment parse_experiment(std::string_view text)
{
    const ConfigFile cfg = ConfigFile::parse(text);
    Experiment exp;
    ScenarioConfig& sc = exp.base;
    auto take = [&](const char* sec, const char* key) { return cfg.take(sec, key); };
    auto what = [](const char* sec, const char* key) { return std::string(sec) + "." + key; };
    auto num = [&](const char* sec, const char* key, double& out) {
        if (auto v = take(sec, key))
            out = cfgval::number(*v, what(sec, key));
    };
    auto ms = [&](const char* sec, const char* key, Micros& out) {
        if (auto v = take(sec, key))
            out = from_ms(cfgval::number(*v, what(sec, key)));
    };
    auto whole = [&](const char* sec, const char* key, auto& out) {
        if (auto v = take(sec, key))
            out = static_cast<std::remove_reference_t<decltype(out)>>(cfgval::whole(*v, what(sec, key)));
    };
    auto flag = [&](const char* sec, const char* key, bool& out) {
        if (auto v = take(sec, key))
            out = cfgval::flag(*v, what(sec, key));
    };

    if (auto v = take("scenario", "name"))
        exp.name = *v;
    sc.name = exp.name;
    if (auto v = take("scenario", "mode")) {
        static const std::map<std::string, RunMode, std::less<>> modes{
            {"lrw", RunMode::Lrw},           {"read_all", RunMode::ReadAll}, {"write_all", RunMode::WriteAll},
            {"transact", RunMode::Transact}, {"costs", RunMode::Costs},      {"consensus", RunMode::Consensus}};
        auto it = modes.find(*v);
        if (it == modes.end())
            ConfigFile::fail(cfg.line_of("scenario", "mode"), "unknown mode '" + *v + "'");
        exp.mode = it->second;
    }
    if (auto v = take("scenario", "note"))
        exp.note = *v;
    whole("scenario", "trials", sc.trials);
    whole("scenario", "seed", sc.seed);
    whole("scenario", "threads", sc.threads);
    flag("scenario", "strict_payload", sc.strict_payload);
    ms("scenario", "trial_gap_ms", sc.trial_gap);

    if (auto v = take("topology", "kind")) {
        static const std::map<std::string, TopologyKind, std::less<>> kinds{{"star", TopologyKind::Star},
                                                                            {"clique", TopologyKind::Clique},
                                                                            {"line", TopologyKind::Line},
                                                                            {"line31", TopologyKind::Line31}};
        auto it = kinds.find(*v);
        if (it == kinds.end())
            ConfigFile::fail(cfg.line_of("topology", "kind"), "unknown topology '" + *v + "'");
        sc.topology.kind = it->second;
    }
    if (sc.topology.kind == TopologyKind::Line31)
        sc.topology.size = 31;
    whole("topology", "size", sc.topology.size);
    if (sc.topology.kind == TopologyKind::Line31 && sc.topology.size != 31)
        ConfigFile::fail(cfg.line_of("topology", "size"), "line31 always has 31 nodes");
    whole("topology", "radius", sc.topology.radius);
    num("topology", "up_fraction", sc.topology.churn.up_fraction);
    num("topology", "flip_rate_hz", sc.topology.churn.flip_rate_hz);
    if (auto v = take("topology", "neighbors"))
        for (auto k : cfgval::whole_list(*v, "topology.neighbors"))
            exp.neighbors.push_back(static_cast<std::size_t>(k));

    if (auto v = take("initiators", "select")) {
        static const std::map<std::string, InitiatorSelect, std::less<>> sel{{"center", InitiatorSelect::Center},
                                                                             {"every_sixth", InitiatorSelect::EverySixth},
                                                                             {"all", InitiatorSelect::All},
                                                                             {"round_robin", InitiatorSelect::RoundRobin},
                                                                             {"list", InitiatorSelect::List}};
        auto it = sel.find(*v);
        if (it == sel.end())
            ConfigFile::fail(cfg.line_of("initiators", "select"), "unknown initiator selector '" + *v + "'");
        sc.initiators.select = it->second;
    }
    if (auto v = take("initiators", "list"))
        for (auto id : cfgval::whole_list(*v, "initiators.list"))
            sc.initiators.list.push_back(NodeId{static_cast<std::uint32_t>(id)});

    ms("timers", "response_ms", sc.timers.response);
    if (auto v = take("timers", "timeout_ms")) {
        for (const auto& item : cfgval::split(*v)) {
            if (item == "inf")
                exp.timeouts.push_back(std::nullopt);
            else
                for (auto t : cfgval::whole_list(item, "timers.timeout_ms"))
                    exp.timeouts.push_back(from_ms(static_cast<double>(t)));
        }
    }
    if (auto v = take("timers", "commit_ms"))
        exp.commit = from_ms(cfgval::number(*v, "timers.commit_ms"));
    num("timers", "commit_factor", exp.commit_factor);

    if (auto v = take("radio", "loss_prob")) {
        if (*v == "calibrate")
            exp.calibrate = true;
        else
            sc.radio.loss_prob = cfgval::number(*v, "radio.loss_prob");
    }
    ms("radio", "mac_delay_lo_ms", sc.radio.mac_delay_lo);
    ms("radio", "mac_delay_hi_ms", sc.radio.mac_delay_hi);
    ms("radio", "processing_ms", sc.radio.processing);
    ms("radio", "ack_delay_ms", sc.radio.ack_delay);
    flag("radio", "unicast_hw_ack", sc.radio.unicast_hw_ack);
    if (auto v = take("radio", "transport")) {
        exp.transports.clear();
        for (const auto& item : cfgval::split(*v)) {
            if (item == "broadcast")
                exp.transports.push_back(Transport::Broadcast);
            else if (item == "unicast")
                exp.transports.push_back(Transport::Unicast);
            else
                ConfigFile::fail(cfg.line_of("radio", "transport"), "unknown transport '" + item + "'");
        }
    }

    CalibrationSpec& cal = exp.calibration;
    cal.seed = sc.seed;
    if (auto v = take("calibration", "timeouts_ms"))
        cal.timeouts_ms = cfgval::number_list(*v, "calibration.timeouts_ms");
    if (auto v = take("calibration", "target_pct"))
        cal.target_pct = cfgval::number_list(*v, "calibration.target_pct");
    num("calibration", "lo", cal.lo);
    num("calibration", "hi", cal.hi);
    whole("calibration", "trials", cal.trials);
    whole("calibration", "seed", cal.seed);
    whole("calibration", "neighbors", cal.neighbors);
    num("calibration", "commit_factor", cal.commit_factor);
    num("calibration", "low_pct", cal.low_pct);
    num("calibration", "high_pct", cal.high_pct);
    whole("calibration", "scan_points", cal.scan_points);

    num("output", "histogram_bin_ms", exp.histogram_bin_ms);

    auto sizes = [&](const char* key, std::vector<std::size_t>& out) {
        if (auto v = take("transact", key)) {
            out.clear();
            for (auto k : cfgval::whole_list(*v, std::string("transact.") + key))
                out.push_back(static_cast<std::size_t>(k));
        }
    };
    sizes("read_sizes", exp.read_sizes);
    sizes("write_sizes", exp.write_sizes);

    if (auto v = take("consensus", "inputs")) {
        exp.consensus_inputs.clear();
        for (auto x : cfgval::whole_list(*v, "consensus.inputs"))
            exp.consensus_inputs.push_back(static_cast<Value>(x));
    }
    whole("consensus", "nodes", exp.consensus_nodes);

    cfg.require_all_used();

    if (exp.timeouts.empty())
        exp.timeouts.push_back(sc.timers.timeout);
    if (exp.transports.empty())
        throw Error(ErrorCode::InvalidConfig, "radio.transport lists no transport");
    if (!(exp.histogram_bin_ms > 0.0))
        throw Error(ErrorCode::InvalidConfig, "output.histogram_bin_ms must be positive");
    for (const auto& t : exp.timeouts) {
        TimerConfig tc = sc.timers;
        tc.timeout = t;
        if (exp.commit)
            tc.commit = *exp.commit;
        else if (t)
            tc.commit = Micros{static_cast<std::int64_t>(static_cast<double>(t->count()) * exp.commit_factor)};
        else
            throw Error(ErrorCode::InvalidConfig, "an infinite timeout needs an explicit timers.commit_ms");
        tc.validate();
    }
    sc.radio.validate();
    if (exp.mode == RunMode::Consensus && (exp.consensus_nodes < 1 || exp.consensus_nodes > 3))
        throw Error(ErrorCode::InvalidConfig, "consensus.nodes must be 1, 2 or 3");
    return exp;
}

// Built-in experiments. presets/<name>.cfg in the source tree holds the same text.
inline const std::map<std::string, std::string, std::less<>>& preset_library()
{
    static const std::map<std::string, std::string, std::less<>> lib{
        {"table1", R"(# Optimistic message and round costs of read-all, write-all, transact and LRW.
[scenario]
name = table1
mode = costs
trials = 1
seed = 1

[topology]
kind = star
neighbors = 1..11

[radio]
loss_prob = 0

[timers]
timeout_ms = 1000

[transact]
read_sizes = 1..6
write_sizes = 1..6
)"},
        {"table2", R"(# One initiator with six neighbors, no contention, timeout sweep.
[scenario]
name = table2
mode = lrw
trials = 250
seed = 2
strict_payload = true

[topology]
kind = star
size = 6

[initiators]
select = center

[timers]
response_ms = 40
timeout_ms = 50, 75, 100
commit_factor = 2

[radio]
loss_prob = calibrate

[calibration]
timeouts_ms = 50, 75, 100
target_pct = 46.64, 96.87, 100
trials = 250
seed = 2
lo = 0
hi = 0.5

[output]
histogram_bin_ms = 20
)"},
        {"table3", R"(# Six initiators on the 31-mote line, overlapping potential neighborhoods.
# Each series samples its links: a potential link is up with probability 0.8.
[scenario]
name = table3
mode = lrw
trials = 1000
seed = 20090602
strict_payload = true

[topology]
kind = line31
up_fraction = 0.8
flip_rate_hz = 0

[initiators]
select = every_sixth

[timers]
response_ms = 40
timeout_ms = 100..350/50
commit_factor = 2

[radio]
loss_prob = calibrate

[calibration]
seed = 2

[output]
histogram_bin_ms = 20
)"},
        {"fig5", R"(# Lossless single initiator, neighborhood sizes 1..11, broadcast versus
# unicast with hardware acks. Generous timers so nothing aborts.
[scenario]
name = fig5
mode = lrw
trials = 250
seed = 20090605

[topology]
kind = star
neighbors = 1..11

[initiators]
select = center

[timers]
response_ms = 40
timeout_ms = 1000
commit_factor = 2

[radio]
loss_prob = 0
transport = broadcast, unicast
unicast_hw_ack = true

[output]
histogram_bin_ms = 5
)"},
        {"inf_timeout", R"(# Seven fully connected motes take turns as initiator with no Timeout;
# rebroadcasts name only the neighbors still missing.
[scenario]
name = inf_timeout
mode = lrw
trials = 9258
seed = 20090611

[topology]
kind = clique
size = 7

[initiators]
select = round_robin

[timers]
response_ms = 40
timeout_ms = inf
commit_ms = 4000

[radio]
loss_prob = calibrate

[calibration]
seed = 2

[output]
histogram_bin_ms = 5
)"},
        {"consensus2", R"(# Exhaustive schedules of the two-node consensus constructions.
[scenario]
name = consensus2
mode = consensus
trials = 1
seed = 1

[consensus]
nodes = 2
inputs = 0, 1
)"},
    };
    return lib;
}

inline Experiment load_preset(std::string_view name)
{
    const auto& lib = preset_library();
    auto it = lib.find(name);
    if (it == lib.end())
        throw Error(ErrorCode::InvalidConfig, "unknown preset '" + std::string(name) + "'");
    return parse_experiment(it->second);
}

struct RunOptions {
    std::optional<std::filesystem::path> out_dir;
    bool emit_trace = false;
    bool emit_histogram = false;
};

struct PointSummary {
    std::string label;
    std::optional<Micros> timeout;
    Transport transport = Transport::Broadcast;
    std::size_t neighbors = 0;
    std::vector<OpRecord> ops;
    double op_reliability_pct = 0.0;
    double series_reliability_pct = 0.0;
    MeanCi duration;
    double mean_broadcasts = 0.0;
    std::size_t success = 0;
    std::size_t canceled = 0;
    std::size_t failed = 0;
    std::vector<HistogramBin> histogram;
    std::size_t divergences = 0;
    std::vector<AuditViolation> violations;
};

struct CostRow {
    std::string operation;
    std::size_t n = 0; // neighborhood size including the initiator
    std::size_t r = 0;
    std::size_t w = 0;
    OpCost cost;
};

struct ConsensusRow {
    std::string protocol;
    std::vector<Value> inputs;
    ExplorationResult exploration;
    ConsensusVerdict verdict;
};

struct ExperimentResult {
    Experiment experiment;
    std::optional<CalibrationResult> calibration;
    double loss_prob = 0.0;
    std::vector<PointSummary> points;
    std::vector<CostRow> costs;
    std::vector<ConsensusRow> consensus;

    std::size_t violation_count() const
    {
        std::size_t n = 0;
        for (const auto& p : points)
            n += p.violations.size();
        for (const auto& c : consensus)
            n += c.verdict.ok() ? 0 : 1;
        return n;
    }
};

namespace detail {

inline std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

inline std::string timeout_label(const std::optional<Micros>& t)
{
    return t ? fmt("%g", to_ms(*t)) : std::string("inf");
}

inline std::ofstream open_out(const std::filesystem::path& p)
{
    std::filesystem::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os)
        throw Error(ErrorCode::InvalidConfig, "cannot write " + p.string());
    return os;
}

inline PointSummary summarize(const Trace& trace, double bin_ms, bool unicast)
{
    PointSummary s;
    s.ops = extract_ops(trace);
    if (s.ops.empty())
        return s;
    s.op_reliability_pct = reliability(s.ops);
    s.series_reliability_pct = series_reliability(group_series(s.ops));
    std::vector<double> d;
    double broadcasts = 0;
    for (const auto& o : s.ops) {
        d.push_back(o.optimistic_duration_ms);
        broadcasts += static_cast<double>(o.init_transmissions);
        s.success += o.outcome == Outcome::Success;
        s.canceled += o.outcome == Outcome::Canceled;
        s.failed += o.outcome == Outcome::Failed;
    }
    s.mean_broadcasts = broadcasts / static_cast<double>(s.ops.size());
    s.duration = d.size() >= 2 ? mean_ci95(d) : MeanCi{d.front(), 0.0};
    s.histogram = duration_histogram(d, bin_ms);
    const auto consistency = audit_consistency(trace);
    s.divergences = consistency.divergences.size();
    s.violations = consistency.violations;
    for (auto&& list : {audit_single_engagement(trace), audit_serializability(trace),
                        audit_message_roles(trace, unicast), audit_causality(trace)})
        s.violations.insert(s.violations.end(), list.begin(), list.end());
    return s;
}

} // namespace detail

// The scenario behind one sweep point.
inline ScenarioConfig point_config(const Experiment& exp, double loss_prob, Transport transport, std::size_t size,
                                   std::optional<Micros> timeout)
{
    ScenarioConfig c = exp.base;
    c.topology.size = size;
    c.transport = transport;
    c.radio.loss_prob = loss_prob;
    c.timers.timeout = timeout;
    c.timers.commit = exp.commit ? *exp.commit
                                 : Micros{static_cast<std::int64_t>(static_cast<double>(timeout->count()) *
                                                                    exp.commit_factor)};
    return c;
}

inline ExperimentResult run_experiment(const Experiment& exp, const RunOptions& opts = {})
{
    ExperimentResult res;
    res.experiment = exp;
    res.loss_prob = exp.base.radio.loss_prob;
    if (exp.calibrate && (exp.mode == RunMode::Lrw)) {
        res.calibration = calibrate_loss_cached(exp.calibration, exp.base.radio, exp.base.timers);
        res.loss_prob = res.calibration->loss_prob;
    }
    const auto& out = opts.out_dir;

    if (exp.mode == RunMode::Lrw) {
        std::vector<std::size_t> sizes = exp.neighbors;
        if (sizes.empty())
            sizes.push_back(exp.base.topology.size);
        const bool size_sweep = exp.neighbors.size() > 0;
        const bool transport_sweep = exp.transports.size() > 1;
        for (Transport tr : exp.transports) {
            for (std::size_t k : sizes) {
                for (const auto& t : exp.timeouts) {
                    const Trace trace = run_scenario(point_config(exp, res.loss_prob, tr, k, t));

                    std::string label;
                    if (transport_sweep)
                        label += std::string(to_string(tr)) + "_";
                    if (size_sweep)
                        label += detail::fmt("k%02.0f_", static_cast<double>(k));
                    label += "timeout_" + detail::timeout_label(t);

                    PointSummary s = detail::summarize(trace, exp.histogram_bin_ms, tr == Transport::Unicast);
                    s.label = label;
                    s.timeout = t;
                    s.transport = tr;
                    s.neighbors = k;
                    if (out) {
                        auto dur = detail::open_out(*out / label / "durations.csv");
                        write_durations_csv(dur, s.ops);
                        if (opts.emit_histogram) {
                            auto h = detail::open_out(*out / label / "histogram.csv");
                            write_histogram_csv(h, s.histogram);
                        }
                        if (!t) {
                            // Ops grouped by how many invitees the final (re)broadcast named.
                            std::map<std::size_t, std::pair<std::size_t, std::pair<double, double>>> by;
                            for (const auto& o : s.ops) {
                                auto& [n, sums] = by[o.last_invited];
                                ++n;
                                sums.first += o.last_round_ms;
                                sums.second += o.optimistic_duration_ms;
                            }
                            auto inv = detail::open_out(*out / label / "invited.csv");
                            inv << "last_invited,ops,pct,mean_last_round_ms,mean_total_ms\n";
                            for (const auto& [k, v] : by) {
                                const double n = static_cast<double>(v.first);
                                inv << k << ',' << v.first << ','
                                    << detail::fmt("%.2f", 100.0 * n / static_cast<double>(s.ops.size())) << ','
                                    << detail::fmt("%.3f", v.second.first / n) << ','
                                    << detail::fmt("%.3f", v.second.second / n) << '\n';
                            }
                        }
                        if (opts.emit_trace) {
                            auto tos = detail::open_out(*out / label / "trace.csv");
                            trace.write_csv(tos);
                        }
                    }
                    res.points.push_back(std::move(s));
                }
            }
        }
    } else if (exp.mode == RunMode::Consensus) {
        std::vector<std::vector<Value>> combos{{}};
        for (std::size_t i = 0; i < exp.consensus_nodes; ++i) {
            std::vector<std::vector<Value>> next;
            for (const auto& c : combos)
                for (Value x : exp.consensus_inputs) {
                    auto e = c;
                    e.push_back(x);
                    next.push_back(std::move(e));
                }
            combos = std::move(next);
        }
        for (const auto& in : combos) {
            auto r = consensus_lrw(in);
            res.consensus.push_back(ConsensusRow{"lrw", in, r, verify_consensus(r, in)});
        }
        if (exp.consensus_nodes == 2)
            for (const auto& in : combos) {
                auto r = consensus_writeall_uvw(in[0], in[1]);
                res.consensus.push_back(ConsensusRow{"writeall_uvw", in, r, verify_consensus(r, in)});
            }
    } else {
        std::vector<std::size_t> sizes = exp.neighbors;
        if (sizes.empty())
            sizes.push_back(exp.base.topology.size);
        RadioModel radio = exp.base.radio;
        const bool all = exp.mode == RunMode::Costs;
        for (std::size_t k : sizes) {
            const std::size_t n = k + 1;
            if (all || exp.mode == RunMode::ReadAll) {
                NeighborOps ops(Topology::star(k), radio, exp.base.seed);
                res.costs.push_back(CostRow{"read_all", n, 0, 0, ops.read_all(NodeId{0}, "v").cost});
            }
            if (all || exp.mode == RunMode::WriteAll) {
                NeighborOps ops(Topology::star(k), radio, exp.base.seed);
                res.costs.push_back(CostRow{"write_all", n, 0, 0, ops.write_all(NodeId{0}, "v", 1, false).cost});
                res.costs.push_back(CostRow{"write_all_acked", n, 0, 0, ops.write_all(NodeId{0}, "v", 1, true).cost});
            }
            if (all) {
                ScenarioConfig c = exp.base;
                c.topology = TopologySpec{TopologyKind::Star, k, 3, {}};
                c.initiators.select = InitiatorSelect::Center;
                c.trials = 1;
                c.timers.commit = std::max(c.timers.commit, 2 * c.timers.timeout.value_or(Micros{0}));
                const auto costs = lrw_cost_audit(run_scenario(c));
                res.costs.push_back(CostRow{"lrw", n, 0, 0, costs.begin()->second});
            }
        }
        if (all || exp.mode == RunMode::Transact) {
            const std::size_t k = std::max(*std::max_element(exp.read_sizes.begin(), exp.read_sizes.end()),
                                           *std::max_element(exp.write_sizes.begin(), exp.write_sizes.end()));
            for (std::size_t r : exp.read_sizes)
                for (std::size_t w : exp.write_sizes) {
                    NeighborOps ops(Topology::star(k), radio, exp.base.seed);
                    TransactRequest req;
                    for (std::uint32_t i = 1; i <= r; ++i)
                        req.read_set.insert(NodeId{i});
                    for (std::uint32_t i = 0; i < w; ++i)
                        req.write_set.insert(NodeId{static_cast<std::uint32_t>(k) - i});
                    res.costs.push_back(CostRow{"transact", k + 1, r, w, ops.transact(NodeId{0}, req).cost});
                }
        }
    }

    if (out) {
        std::filesystem::create_directories(*out);
        {
            auto md = detail::open_out(*out / "metadata.txt");
            md << "name = " << exp.name << '\n';
            md << "mode = " << to_string(exp.mode) << '\n';
            md << "seed = " << exp.base.seed << '\n';
            md << "trials = " << exp.base.trials << '\n';
            if (!exp.note.empty())
                md << "note = " << exp.note << '\n';
            if (exp.mode == RunMode::Lrw) {
                md << "loss_prob = " << detail::fmt("%.6f", res.loss_prob) << '\n';
                if (res.calibration) {
                    const auto& cal = *res.calibration;
                    md << "loss_source = calibrate_loss (seed " << exp.calibration.seed << ", "
                       << exp.calibration.trials << " trials per timeout, star of " << exp.calibration.neighbors
                       << " neighbors)\n";
                    md << "calibration_feasible_interval = " << detail::fmt("%.6f", cal.feasible_lo) << " .. "
                       << detail::fmt("%.6f", cal.feasible_hi) << '\n';
                    md << "calibration_curve_pct =";
                    for (std::size_t i = 0; i < cal.reliability_pct.size(); ++i)
                        md << ' ' << detail::fmt("%g", exp.calibration.timeouts_ms[i]) << "ms:"
                           << detail::fmt("%.2f", cal.reliability_pct[i]);
                    md << '\n';
                    md << "calibration_shape_matched = " << (cal.shape_matched ? "true" : "false") << '\n';
                } else {
                    md << "loss_source = configured\n";
                }
                md << "duration_definition = invoke to the final AcceptMsg (Success) or final AbortAck (Canceled); "
                      "invoke to Return for Failed. The Canceled and Failed cases extend the optimistic duration.\n";
                md << "hardware_note = absolute reliabilities and durations depend on the radio; the presets target "
                      "curve shapes, not absolute percentages\n";
                std::size_t divergences = 0;
                for (const auto& p : res.points)
                    divergences += p.divergences;
                md << "audit_divergences_failed_ops = " << divergences << '\n';
            }
            md << "audit_violations = " << res.violation_count() << '\n';
        }
        if (exp.mode == RunMode::Lrw) {
            std::vector<ReliabilityRow> rows;
            for (const auto& p : res.points)
                rows.push_back(ReliabilityRow{p.timeout ? to_ms(*p.timeout) : -1.0, p.op_reliability_pct,
                                              p.series_reliability_pct});
            auto rel = detail::open_out(*out / "reliability.csv");
            if (exp.transports.size() > 1 || !exp.neighbors.empty()) {
                rel << "point,";
                std::ostringstream tmp;
                write_reliability_csv(tmp, rows);
                std::istringstream lines(tmp.str());
                std::string line;
                std::getline(lines, line);
                rel << line << '\n';
                for (const auto& p : res.points) {
                    std::getline(lines, line);
                    rel << p.label << ',' << line << '\n';
                }
            } else {
                write_reliability_csv(rel, rows);
            }
            auto sum = detail::open_out(*out / "summary.csv");
            sum << "point,transport,topology_size,timeout_ms,ops,success,canceled,failed,op_reliability_pct,"
                   "series_reliability_pct,mean_ms,ci95_ms,mean_broadcasts,divergences,violations\n";
            for (const auto& p : res.points)
                sum << p.label << ',' << to_string(p.transport) << ',' << p.neighbors << ','
                    << detail::timeout_label(p.timeout) << ',' << p.ops.size() << ',' << p.success << ','
                    << p.canceled << ',' << p.failed << ',' << detail::fmt("%.2f", p.op_reliability_pct) << ','
                    << detail::fmt("%.2f", p.series_reliability_pct) << ',' << detail::fmt("%.3f", p.duration.mean)
                    << ',' << detail::fmt("%.3f", p.duration.half_width) << ',' << detail::fmt("%.4f", p.mean_broadcasts)
                    << ',' << p.divergences << ',' << p.violations.size() << '\n';
            if (!exp.neighbors.empty()) {
                auto nd = detail::open_out(*out / "neighborhood_duration.csv");
                nd << "transport,neighbors,mean_ms,ci95_ms,ops\n";
                for (const auto& p : res.points)
                    nd << to_string(p.transport) << ',' << p.neighbors << ',' << detail::fmt("%.3f", p.duration.mean)
                       << ',' << detail::fmt("%.3f", p.duration.half_width) << ',' << p.ops.size() << '\n';
            }
        }
        if (!res.costs.empty()) {
            auto cs = detail::open_out(*out / "costs.csv");
            cs << "operation,n,r,w,messages,rounds\n";
            for (const auto& c : res.costs)
                cs << c.operation << ',' << c.n << ',' << c.r << ',' << c.w << ',' << c.cost.messages << ','
                   << c.cost.rounds << '\n';
        }
        if (!res.consensus.empty()) {
            auto cs = detail::open_out(*out / "consensus.csv");
            cs << "protocol,inputs,schedules,decision_vectors,agreement,validity,termination,write_once\n";
            for (const auto& c : res.consensus) {
                cs << c.protocol << ',';
                for (std::size_t i = 0; i < c.inputs.size(); ++i)
                    cs << (i ? " " : "") << c.inputs[i];
                cs << ',' << c.exploration.schedules << ',';
                bool first = true;
                for (const auto& v : c.exploration.decision_vectors) {
                    cs << (first ? "" : "|");
                    first = false;
                    for (std::size_t i = 0; i < v.size(); ++i)
                        cs << (i ? " " : "") << (v[i] ? std::to_string(*v[i]) : std::string("omega"));
                }
                auto yn = [](bool b) { return b ? "yes" : "no"; };
                cs << ',' << yn(c.verdict.agreement) << ',' << yn(c.verdict.validity) << ','
                   << yn(c.verdict.termination) << ',' << yn(c.verdict.write_once) << '\n';
            }
        }
    }
    return res;
}

} // namespace lrw

#endif // LRW_SCENARIO_HPP
