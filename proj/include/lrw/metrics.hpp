#ifndef LRW_METRICS_HPP
#define LRW_METRICS_HPP

#include "lrw/core.hpp"
#include "lrw/trace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace lrw {

struct OpRecord {
    OpId op_id = 0;
    NodeId initiator;
    std::uint64_t series = 0;
    Outcome outcome = Outcome::Failed;
    SimTime invoke_time{0};
    SimTime return_time{0};
    // Invoke until the final needed AcceptMsg (Success) or AbortAck (Canceled);
    // invoke until Return for Failed. The Return is emitted on that very
    // receipt, so this is Return - Invoke in all three cases.
    double optimistic_duration_ms = 0.0;
    // Distinct instants at which the initiator transmitted an InitMsg; equals
    // the broadcast count in broadcast mode.
    std::size_t init_transmissions = 0;
    std::size_t abort_transmissions = 0;
    std::size_t neighbors_at_invoke = 0;
    // Invitees named by the last InitMsg transmission, and the time from that
    // transmission to the Return.
    std::size_t last_invited = 0;
    double last_round_ms = 0.0;
};

struct SeriesRecord {
    std::uint64_t series_id = 0;
    std::vector<OpRecord> ops;
    double duration_ms = 0.0;
    bool failed = false;
};

namespace detail {

using OpKey = std::pair<NodeId, OpId>;

inline double ms_between(SimTime a, SimTime b) { return to_ms(b - a); }

} // namespace detail

// One record per invocation that has a Return. Invocations without a Return
// are reported by audit_consistency, not here.
inline std::vector<OpRecord> extract_ops(const Trace& trace)
{
    struct Acc {
        OpRecord rec;
        bool returned = false;
        std::set<SimTime> init_times;
        std::set<SimTime> abort_times;
        SimTime last_init{0};
    };
    std::map<detail::OpKey, Acc> acc;
    std::vector<detail::OpKey> order;
    for (const auto& r : trace.records()) {
        const detail::OpKey key{r.initiator, r.op_id};
        switch (r.kind) {
        case RecordKind::Invoke: {
            Acc& a = acc[key];
            a.rec.op_id = r.op_id;
            a.rec.initiator = r.initiator;
            a.rec.series = r.series;
            a.rec.invoke_time = r.time;
            a.rec.neighbors_at_invoke = static_cast<std::size_t>(r.count);
            order.push_back(key);
            break;
        }
        case RecordKind::Send: {
            if (r.node != r.initiator)
                break;
            auto it = acc.find(key);
            if (it == acc.end())
                break;
            if (r.label == to_string(MsgKind::InitMsg)) {
                it->second.init_times.insert(r.time);
                it->second.rec.last_invited = static_cast<std::size_t>(r.count);
                it->second.last_init = r.time;
            } else if (r.label == to_string(MsgKind::AbortMsg)) {
                it->second.abort_times.insert(r.time);
            }
            break;
        }
        case RecordKind::Return: {
            auto it = acc.find(key);
            if (it == acc.end() || it->second.returned)
                break;
            Acc& a = it->second;
            a.returned = true;
            a.rec.outcome = parse_outcome(r.label).value_or(Outcome::Failed);
            a.rec.return_time = r.time;
            a.rec.optimistic_duration_ms = detail::ms_between(a.rec.invoke_time, r.time);
            a.rec.last_round_ms = detail::ms_between(a.last_init, r.time);
            break;
        }
        default: break;
        }
    }
    std::vector<OpRecord> out;
    for (const auto& key : order) {
        Acc& a = acc.at(key);
        if (!a.returned)
            continue;
        a.rec.init_transmissions = a.init_times.size();
        a.rec.abort_transmissions = a.abort_times.size();
        out.push_back(a.rec);
    }
    return out;
}

inline std::vector<SeriesRecord> group_series(const std::vector<OpRecord>& ops)
{
    std::map<std::uint64_t, SeriesRecord> by_id;
    for (const auto& op : ops) {
        SeriesRecord& s = by_id[op.series];
        s.series_id = op.series;
        s.ops.push_back(op);
        s.duration_ms = std::max(s.duration_ms, op.optimistic_duration_ms);
        s.failed = s.failed || op.outcome == Outcome::Failed;
    }
    std::vector<SeriesRecord> out;
    out.reserve(by_id.size());
    for (auto& [id, s] : by_id)
        out.push_back(std::move(s));
    return out;
}

inline double reliability(const std::vector<OpRecord>& ops)
{
    if (ops.empty())
        throw Error(ErrorCode::EmptyInput, "reliability of an empty operation set");
    const auto ok = std::count_if(ops.begin(), ops.end(), [](const OpRecord& o) { return o.outcome != Outcome::Failed; });
    return 100.0 * static_cast<double>(ok) / static_cast<double>(ops.size());
}

inline double series_reliability(const std::vector<SeriesRecord>& series)
{
    if (series.empty())
        throw Error(ErrorCode::EmptyInput, "reliability of an empty series set");
    const auto ok = std::count_if(series.begin(), series.end(), [](const SeriesRecord& s) { return !s.failed; });
    return 100.0 * static_cast<double>(ok) / static_cast<double>(series.size());
}

struct HistogramBin {
    double lo_ms = 0.0;
    double hi_ms = 0.0;
    double pct = 0.0;
};

// Bins [k*w, (k+1)*w) from 0 up to the bin holding the largest sample.
inline std::vector<HistogramBin> duration_histogram(const std::vector<double>& durations_ms, double bin_width_ms)
{
    if (!(bin_width_ms > 0.0))
        throw Error(ErrorCode::InvalidConfig, "histogram bin width must be positive");
    if (durations_ms.empty())
        return {};
    std::vector<std::size_t> counts;
    for (double d : durations_ms) {
        const auto k = static_cast<std::size_t>(std::floor(std::max(d, 0.0) / bin_width_ms));
        if (k >= counts.size())
            counts.resize(k + 1, 0);
        ++counts[k];
    }
    std::vector<HistogramBin> bins(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k) {
        bins[k].lo_ms = static_cast<double>(k) * bin_width_ms;
        bins[k].hi_ms = static_cast<double>(k + 1) * bin_width_ms;
        bins[k].pct = 100.0 * static_cast<double>(counts[k]) / static_cast<double>(durations_ms.size());
    }
    return bins;
}

inline std::vector<HistogramBin> duration_histogram(const std::vector<OpRecord>& ops, double bin_width_ms)
{
    std::vector<double> d;
    d.reserve(ops.size());
    for (const auto& o : ops)
        d.push_back(o.optimistic_duration_ms);
    return duration_histogram(d, bin_width_ms);
}

struct Mode {
    std::size_t bin = 0;
    double pct = 0.0;
    double prominence = 0.0;
    double center_ms = 0.0;
};

// Local maxima whose topographic prominence is at least `min_prominence_pct`
// (the area outside the histogram counts as 0%). Plateaus report their first bin.
inline std::vector<Mode> find_modes(const std::vector<HistogramBin>& bins, double min_prominence_pct = 0.0)
{
    std::vector<Mode> out;
    const std::size_t n = bins.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double h = bins[i].pct;
        if (h <= 0.0)
            continue;
        std::size_t end = i;
        while (end + 1 < n && bins[end + 1].pct == h)
            ++end;
        const double left = i == 0 ? 0.0 : bins[i - 1].pct;
        const double right = end + 1 == n ? 0.0 : bins[end + 1].pct;
        if (left < h && right < h) {
            double lmin = h;
            std::size_t j = i;
            while (j > 0 && bins[j - 1].pct <= h) {
                --j;
                lmin = std::min(lmin, bins[j].pct);
            }
            if (j == 0)
                lmin = 0.0;
            double rmin = h;
            std::size_t k = end;
            while (k + 1 < n && bins[k + 1].pct <= h) {
                ++k;
                rmin = std::min(rmin, bins[k].pct);
            }
            if (k + 1 == n)
                rmin = 0.0;
            const double prominence = h - std::max(lmin, rmin);
            if (prominence >= min_prominence_pct)
                out.push_back(Mode{i, h, prominence, 0.5 * (bins[i].lo_ms + bins[i].hi_ms)});
        }
        i = end;
    }
    return out;
}

struct MeanCi {
    double mean = 0.0;
    double half_width = 0.0;
};

// Normal approximation: half-width 1.96 * s / sqrt(n) with the n-1 sample sd.
inline MeanCi mean_ci95(const std::vector<double>& samples)
{
    if (samples.size() < 2)
        throw Error(ErrorCode::TooFewSamples, "a confidence interval needs at least two samples");
    const double n = static_cast<double>(samples.size());
    double sum = 0.0;
    for (double x : samples)
        sum += x;
    const double mean = sum / n;
    double ss = 0.0;
    for (double x : samples)
        ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    return {mean, 1.96 * sd / std::sqrt(n)};
}

struct Divergence {
    NodeId initiator;
    OpId op_id = 0;
    std::optional<Outcome> outcome;
    std::vector<NodeId> committed;
    std::vector<NodeId> discarded_or_silent;
};

struct AuditViolation {
    NodeId initiator;
    NodeId node;
    OpId op_id = 0;
    std::string what;
};

struct ConsistencyReport {
    std::vector<Divergence> divergences;
    std::vector<AuditViolation> violations;
};

// Checks commit decisions against outcomes:
//   - divergent commits (some engaged neighbors commit, others not) are only
//     allowed for Failed operations;
//   - Success: every neighbor that accepted commits, unless an AbortMsg went out;
//   - Canceled: no neighbor commits;
//   - every Invoke has exactly one Return, within its Commit window.
inline ConsistencyReport audit_consistency(const Trace& trace)
{
    struct OpView {
        bool invoked = false;
        SimTime invoke_time{0};
        std::optional<Micros> commit_window;
        std::size_t returns = 0;
        std::optional<Outcome> outcome;
        SimTime return_time{0};
        bool abort_sent = false;
        std::set<NodeId> engaged;
        std::set<NodeId> accepted;
        std::set<NodeId> committed;
    };
    std::map<detail::OpKey, OpView> ops;
    std::vector<detail::OpKey> order;
    for (const auto& r : trace.records()) {
        const detail::OpKey key{r.initiator, r.op_id};
        OpView& v = ops[key];
        const bool at_initiator = r.node == r.initiator;
        switch (r.kind) {
        case RecordKind::Invoke:
            v.invoked = true;
            v.invoke_time = r.time;
            order.push_back(key);
            break;
        case RecordKind::Return:
            ++v.returns;
            v.outcome = parse_outcome(r.label);
            v.return_time = r.time;
            break;
        case RecordKind::TimerStart:
            if (r.label != to_string(TimerKind::Commit))
                break;
            if (at_initiator)
                v.commit_window = Micros{r.count};
            else
                v.engaged.insert(r.node);
            break;
        case RecordKind::Send:
            if (at_initiator && r.label == to_string(MsgKind::AbortMsg))
                v.abort_sent = true;
            if (!at_initiator && r.label == to_string(MsgKind::AcceptMsg))
                v.accepted.insert(r.node);
            break;
        case RecordKind::Commit:
            if (!at_initiator)
                v.committed.insert(r.node);
            break;
        default: break;
        }
    }

    ConsistencyReport report;
    auto violate = [&](const detail::OpKey& k, NodeId node, std::string what) {
        report.violations.push_back(AuditViolation{k.first, node, k.second, std::move(what)});
    };
    for (const auto& key : order) {
        const OpView& v = ops.at(key);
        if (v.returns != 1) {
            violate(key, key.first, "invocation has " + std::to_string(v.returns) + " returns");
        } else if (v.commit_window && v.return_time - v.invoke_time > *v.commit_window) {
            violate(key, key.first, "return later than the Commit window");
        }

        if (!v.engaged.empty() && !v.committed.empty() && v.committed.size() < v.engaged.size()) {
            Divergence d{key.first, key.second, v.outcome, {v.committed.begin(), v.committed.end()}, {}};
            for (NodeId n : v.engaged)
                if (!v.committed.contains(n))
                    d.discarded_or_silent.push_back(n);
            if (v.outcome != Outcome::Failed)
                violate(key, key.first, "divergent commits without a Failed outcome");
            report.divergences.push_back(std::move(d));
        }
        if (v.outcome == Outcome::Canceled)
            for (NodeId n : v.committed)
                violate(key, n, "commit for a Canceled operation");
        if (v.outcome == Outcome::Success && !v.abort_sent)
            for (NodeId n : v.accepted)
                if (!v.committed.contains(n))
                    violate(key, n, "accepted a Successful operation but never committed");
    }
    return report;
}

struct EngagementInterval {
    NodeId node;
    NodeId initiator;
    OpId op_id = 0;
    SimTime start{0};
    std::optional<SimTime> end;
    bool committed = false;
};

// Engaged intervals at non-initiator nodes: from the neighbor's Commit timer
// start to its Commit or Discard. Intervals still open at the end of the
// trace have no end.
inline std::vector<EngagementInterval> engagement_intervals(const Trace& trace)
{
    std::vector<EngagementInterval> out;
    std::map<std::pair<NodeId, detail::OpKey>, std::size_t> open;
    for (const auto& r : trace.records()) {
        if (r.node == r.initiator)
            continue;
        const auto key = std::pair{r.node, detail::OpKey{r.initiator, r.op_id}};
        if (r.kind == RecordKind::TimerStart && r.label == to_string(TimerKind::Commit)) {
            if (!open.contains(key)) {
                open[key] = out.size();
                out.push_back(EngagementInterval{r.node, r.initiator, r.op_id, r.time, std::nullopt, false});
            }
        } else if (r.kind == RecordKind::Commit || r.kind == RecordKind::Discard) {
            auto it = open.find(key);
            if (it == open.end())
                continue;
            out[it->second].end = r.time;
            out[it->second].committed = r.kind == RecordKind::Commit;
            open.erase(it);
        }
    }
    return out;
}

// Empty iff no node is ever engaged in two operations at once. Intervals are
// half-open, so a commit and a new engagement at the same instant do not clash.
inline std::vector<AuditViolation> audit_single_engagement(const Trace& trace)
{
    std::vector<AuditViolation> out;
    std::map<NodeId, std::vector<EngagementInterval>> by_node;
    for (auto& iv : engagement_intervals(trace))
        by_node[iv.node].push_back(iv);
    for (auto& [node, ivs] : by_node) {
        std::stable_sort(ivs.begin(), ivs.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
        std::optional<SimTime> busy_until;
        bool open_forever = false;
        for (const auto& iv : ivs) {
            if (open_forever || (busy_until && iv.start < *busy_until))
                out.push_back(AuditViolation{iv.initiator, node, iv.op_id, "overlapping engagement"});
            if (!iv.end)
                open_forever = true;
            else
                busy_until = std::max(busy_until.value_or(iv.end.value()), *iv.end);
        }
    }
    return out;
}

// Committed operations only: engagement intervals at each shared neighbor
// are pairwise disjoint.
inline std::vector<AuditViolation> audit_serializability(const Trace& trace)
{
    std::vector<AuditViolation> out;
    std::map<NodeId, std::vector<EngagementInterval>> by_node;
    for (auto& iv : engagement_intervals(trace))
        if (iv.committed)
            by_node[iv.node].push_back(iv);
    for (auto& [node, ivs] : by_node) {
        std::stable_sort(ivs.begin(), ivs.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
        for (std::size_t i = 1; i < ivs.size(); ++i)
            if (ivs[i].start < *ivs[i - 1].end)
                out.push_back(AuditViolation{ivs[i].initiator, node, ivs[i].op_id,
                                             "committed engagements overlap op " + std::to_string(ivs[i - 1].op_id)});
    }
    return out;
}

// Replies go unicast to the initiator; InitMsg and AbortMsg are broadcasts
// unless the run used unicast transport.
inline std::vector<AuditViolation> audit_message_roles(const Trace& trace, bool unicast_transport = false)
{
    std::vector<AuditViolation> out;
    for (const auto& r : trace.records()) {
        if (r.kind != RecordKind::Send)
            continue;
        const bool request = r.label == to_string(MsgKind::InitMsg) || r.label == to_string(MsgKind::AbortMsg);
        if (request && r.node != r.initiator)
            out.push_back(AuditViolation{r.initiator, r.node, r.op_id, r.label + " sent by a non-initiator"});
        else if (request && r.peer && !unicast_transport)
            out.push_back(AuditViolation{r.initiator, r.node, r.op_id, r.label + " was not broadcast"});
        else if (!request && (!r.peer || *r.peer != r.initiator))
            out.push_back(AuditViolation{r.initiator, r.node, r.op_id, r.label + " not unicast to the initiator"});
    }
    return out;
}

// Every Deliver/Drop follows a Send with the same transmission id; every
// Return follows an Invoke of the same operation.
inline std::vector<AuditViolation> audit_causality(const Trace& trace)
{
    std::vector<AuditViolation> out;
    std::map<std::pair<std::uint64_t, std::uint64_t>, SimTime> sent; // (series, tx)
    std::set<std::pair<NodeId, OpId>> invoked;
    for (const auto& r : trace.records()) {
        switch (r.kind) {
        case RecordKind::Send: sent.emplace(std::pair{r.series, r.tx}, r.time); break;
        case RecordKind::Invoke: invoked.insert({r.initiator, r.op_id}); break;
        case RecordKind::Deliver:
        case RecordKind::Drop: {
            auto it = sent.find({r.series, r.tx});
            if (it == sent.end() || it->second > r.time)
                out.push_back(AuditViolation{r.initiator, r.node, r.op_id, "receipt without an earlier send"});
            break;
        }
        case RecordKind::Return:
            if (!invoked.contains({r.initiator, r.op_id}))
                out.push_back(AuditViolation{r.initiator, r.node, r.op_id, "return without an invoke"});
            break;
        default: break;
        }
    }
    return out;
}

struct ReliabilityRow {
    double timeout_ms = 0.0; // negative encodes an infinite timeout
    double op_reliability_pct = 0.0;
    double series_reliability_pct = 0.0;
};

namespace detail {

inline std::string fixed(double v, int digits)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace detail

inline void write_reliability_csv(std::ostream& os, const std::vector<ReliabilityRow>& rows)
{
    os << "timeout_ms,op_reliability_pct,series_reliability_pct\n";
    for (const auto& r : rows)
        os << (r.timeout_ms < 0 ? std::string("inf") : detail::fixed(r.timeout_ms, 0)) << ','
           << detail::fixed(r.op_reliability_pct, 2) << ',' << detail::fixed(r.series_reliability_pct, 2) << '\n';
}

inline void write_durations_csv(std::ostream& os, const std::vector<OpRecord>& ops)
{
    os << "op_id,outcome,duration_ms\n";
    for (const auto& o : ops)
        os << o.op_id << ',' << to_string(o.outcome) << ',' << detail::fixed(o.optimistic_duration_ms, 3) << '\n';
}

inline void write_histogram_csv(std::ostream& os, const std::vector<HistogramBin>& bins)
{
    os << "bin_lo_ms,bin_hi_ms,pct\n";
    for (const auto& b : bins)
        os << detail::fixed(b.lo_ms, 1) << ',' << detail::fixed(b.hi_ms, 1) << ',' << detail::fixed(b.pct, 4) << '\n';
}

} // namespace lrw

#endif // LRW_METRICS_HPP
