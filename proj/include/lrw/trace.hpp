#ifndef LRW_TRACE_HPP
#define LRW_TRACE_HPP

#include "lrw/core.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace lrw {

enum class RecordKind {
    Send,
    Deliver,
    Drop,
    TimerStart,
    TimerFire,
    TimerCancel,
    Commit,
    Discard,
    Invoke,
    Return,
    Stale,
};

constexpr std::string_view to_string(RecordKind k)
{
    switch (k) {
    case RecordKind::Send: return "Send";
    case RecordKind::Deliver: return "Deliver";
    case RecordKind::Drop: return "Drop";
    case RecordKind::TimerStart: return "TimerStart";
    case RecordKind::TimerFire: return "TimerFire";
    case RecordKind::TimerCancel: return "TimerCancel";
    case RecordKind::Commit: return "Commit";
    case RecordKind::Discard: return "Discard";
    case RecordKind::Invoke: return "Invoke";
    case RecordKind::Return: return "Return";
    case RecordKind::Stale: return "Stale";
    }
    return "?";
}

// One entry of a run. Field use by kind:
//   Send        peer = unicast destination (none for broadcast), count = invitees named
//   Deliver     peer = transmitter; label "HwAck" for a hardware ack frame
//   Drop        peer = transmitter, node = intended receiver
//   Timer*      label = timer kind; initiator tells whose operation it belongs to
//   Commit      node == initiator for the initiator's own write
//   Invoke      count = neighborhood size
//   Return      label = outcome
struct TraceRecord {
    SimTime time{0};
    NodeId node;
    RecordKind kind = RecordKind::Send;
    NodeId initiator;
    OpId op_id = 0;
    std::string label;
    std::optional<NodeId> peer;
    std::uint64_t tx = 0;
    std::int64_t count = 0;
    std::uint64_t series = 0;

    bool operator==(const TraceRecord&) const = default;
};

class Trace {
public:
    void add(TraceRecord r) { records_.push_back(std::move(r)); }

    // Appends `other`, shifting its times by `offset`.
    void append(const Trace& other, Micros offset = Micros{0})
    {
        for (TraceRecord r : other.records_) {
            r.time += offset;
            records_.push_back(std::move(r));
        }
    }

    void reserve(std::size_t n) { records_.reserve(n); }
    const std::vector<TraceRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }

    std::size_t count(RecordKind kind) const
    {
        std::size_t n = 0;
        for (const auto& r : records_)
            n += r.kind == kind;
        return n;
    }

    bool operator==(const Trace&) const = default;

    static constexpr std::string_view csv_header = "time_us,node,record_kind,op_id,detail";

    // Columns: time_us,node,record_kind,op_id,detail. The detail column is a
    // space-separated list: label first, then key=value pairs
    // (init, to|from, tx, n, series) where they apply.
    void write_csv(std::ostream& os) const
    {
        os << csv_header << '\n';
        for (const auto& r : records_) {
            os << r.time.count() << ',' << r.node.value << ',' << to_string(r.kind) << ',' << r.op_id << ',';
            os << (r.label.empty() ? "-" : r.label) << " init=" << r.initiator.value;
            if (r.kind == RecordKind::Send)
                os << " to=" << (r.peer ? std::to_string(r.peer->value) : std::string("*"));
            else if (r.peer)
                os << " from=" << r.peer->value;
            if (r.tx)
                os << " tx=" << r.tx;
            if (r.count)
                os << " n=" << r.count;
            if (r.kind == RecordKind::Invoke || r.kind == RecordKind::Return)
                os << " series=" << r.series;
            os << '\n';
        }
    }

private:
    std::vector<TraceRecord> records_;
};

} // namespace lrw

#endif // LRW_TRACE_HPP
