#ifndef LRW_CORE_HPP
#define LRW_CORE_HPP

#include <algorithm>
#include <chrono>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lrw {

using Micros = std::chrono::microseconds;
using SimTime = Micros; // offset from the start of a scenario
using Value = std::int64_t;
using OpId = std::uint64_t;

constexpr Micros from_ms(double ms) { return Micros{static_cast<std::int64_t>(ms * 1000.0 + (ms >= 0 ? 0.5 : -0.5))}; }
constexpr double to_ms(Micros us) { return static_cast<double>(us.count()) / 1000.0; }

struct NodeId {
    std::uint32_t value = 0;

    constexpr NodeId() = default;
    constexpr explicit NodeId(std::uint32_t v) : value(v) {}
    constexpr auto operator<=>(const NodeId&) const = default;
};

inline std::string to_string(NodeId id) { return std::to_string(id.value); }

enum class ErrorCode {
    PayloadTooLarge,
    WriteArityMismatch,
    NoPendingWrite,
    PendingWriteExists,
    AlreadyActive,
    EmptyNeighborhood,
    InvalidConfig,
    InitiatorBusy,
    EmptyInput,
    TooFewSamples,
    StateSpaceExceeded,
    NoFeasiblePoint,
    Conflict,
    Timeout,
};

constexpr std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::PayloadTooLarge: return "PayloadTooLarge";
    case ErrorCode::WriteArityMismatch: return "WriteArityMismatch";
    case ErrorCode::NoPendingWrite: return "NoPendingWrite";
    case ErrorCode::PendingWriteExists: return "PendingWriteExists";
    case ErrorCode::AlreadyActive: return "AlreadyActive";
    case ErrorCode::EmptyNeighborhood: return "EmptyNeighborhood";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InitiatorBusy: return "InitiatorBusy";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::StateSpaceExceeded: return "StateSpaceExceeded";
    case ErrorCode::NoFeasiblePoint: return "NoFeasiblePoint";
    case ErrorCode::Conflict: return "Conflict";
    case ErrorCode::Timeout: return "Timeout";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what)
        , code_(code)
    {
    }

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// Committed variable values as seen by reads.
using VarSnapshot = std::map<std::string, Value, std::less<>>;

struct PendingWrite {
    std::vector<std::string> vars;
    std::vector<Value> values;
    NodeId initiator;
    OpId op_id = 0;

    bool operator==(const PendingWrite&) const = default;
};

// Per-node variables. A staged write stays invisible to reads until commit().
class VarStore {
public:
    VarStore() = default;
    VarStore(std::initializer_list<std::pair<const std::string, Value>> init) : committed_(init) {}

    std::optional<Value> read(std::string_view name) const
    {
        auto it = committed_.find(name);
        if (it == committed_.end())
            return std::nullopt;
        return it->second;
    }
    Value read_or(std::string_view name, Value fallback) const { return read(name).value_or(fallback); }

    const VarSnapshot& snapshot() const noexcept { return committed_; }
    const std::optional<PendingWrite>& pending() const noexcept { return pending_; }
    bool has_pending() const noexcept { return pending_.has_value(); }

    void set(std::string name, Value v) { committed_[std::move(name)] = v; }

    void stage(PendingWrite write)
    {
        if (pending_)
            throw Error(ErrorCode::PendingWriteExists, "a tentative write is already staged");
        if (write.vars.size() != write.values.size())
            throw Error(ErrorCode::WriteArityMismatch, "write values do not align with write variables");
        pending_ = std::move(write);
    }

    void commit()
    {
        if (!pending_)
            throw Error(ErrorCode::NoPendingWrite, "commit without a staged write");
        for (std::size_t i = 0; i < pending_->vars.size(); ++i)
            committed_[pending_->vars[i]] = pending_->values[i];
        pending_.reset();
    }

    void discard() noexcept { pending_.reset(); }

    bool operator==(const VarStore&) const = default;

private:
    VarSnapshot committed_;
    std::optional<PendingWrite> pending_;
};

inline VarStore apply_commit(VarStore store)
{
    store.commit();
    return store;
}

// What a neighbor's evaluator hands back when it accepts: the value the
// initiator aggregates, and the values to stage for the write variables.
struct Response {
    Value r = 0;
    std::vector<Value> writes;
};

// nullopt is the negative response.
using Evaluation = std::optional<Response>;
using Evaluator = std::function<Evaluation(const VarSnapshot&, std::span<const Value> payload)>;
using Aggregate = std::function<bool(std::span<const Value> r_values)>;

inline constexpr std::size_t kMaxPayloadBytes = 28;

struct LrwSpec {
    std::vector<std::string> read_vars;
    std::vector<std::string> write_vars;
    Evaluator evaluate;
    Aggregate aggregate;
    // Carried in every InitMsg and handed to the evaluator at each neighbor.
    std::vector<Value> payload;
    std::size_t payload_bytes = 0;
    // Values the initiator commits to its own write_vars once Commit expires after Success.
    std::optional<std::vector<Value>> self_write;
};

// Accepts everywhere, writes the payload verbatim, aggregate always true.
inline LrwSpec make_accept_all_spec(std::vector<std::string> write_vars, std::vector<Value> payload)
{
    LrwSpec spec;
    spec.write_vars = std::move(write_vars);
    spec.payload = std::move(payload);
    spec.payload_bytes = spec.payload.size() * sizeof(std::int16_t) + 4;
    spec.evaluate = [](const VarSnapshot&, std::span<const Value> p) -> Evaluation {
        return Response{0, std::vector<Value>(p.begin(), p.end())};
    };
    spec.aggregate = [](std::span<const Value>) { return true; };
    return spec;
}

// Checks payload size and, using the probe store, that the evaluator's write
// list lines up with write_vars.
inline std::optional<ErrorCode> validate_spec(const LrwSpec& spec, bool strict_payload, const VarStore& probe = {})
{
    if (strict_payload && spec.payload_bytes > kMaxPayloadBytes)
        return ErrorCode::PayloadTooLarge;
    if (spec.evaluate) {
        Evaluation e = spec.evaluate(probe.snapshot(), spec.payload);
        if (e && e->writes.size() != spec.write_vars.size())
            return ErrorCode::WriteArityMismatch;
    }
    if (spec.self_write && spec.self_write->size() != spec.write_vars.size())
        return ErrorCode::WriteArityMismatch;
    return std::nullopt;
}

enum class MsgKind { InitMsg, AcceptMsg, RejectMsg, AbortMsg, AbortAck };

constexpr std::string_view to_string(MsgKind k)
{
    switch (k) {
    case MsgKind::InitMsg: return "InitMsg";
    case MsgKind::AcceptMsg: return "AcceptMsg";
    case MsgKind::RejectMsg: return "RejectMsg";
    case MsgKind::AbortMsg: return "AbortMsg";
    case MsgKind::AbortAck: return "AbortAck";
    }
    return "?";
}

// InitMsg and AbortMsg are local broadcasts; the rest are unicast to the initiator.
constexpr bool is_broadcast_kind(MsgKind k) { return k == MsgKind::InitMsg || k == MsgKind::AbortMsg; }

struct Message {
    MsgKind kind = MsgKind::InitMsg;
    NodeId initiator;
    NodeId sender;
    OpId op_id = 0;
    Micros commit_remaining{0};
    std::vector<NodeId> invitees; // sorted
    Value r_value = 0;
    std::vector<Value> write_payload;

    std::string_view kind_label() const { return to_string(kind); }
    NodeId op_initiator() const { return initiator; }
    OpId op() const { return op_id; }
    std::int64_t count_field() const { return static_cast<std::int64_t>(invitees.size()); }

    bool names(NodeId n) const
    {
        return std::binary_search(invitees.begin(), invitees.end(), n);
    }

    bool operator==(const Message&) const = default;
};

enum class Outcome { Success, Canceled, Failed };

constexpr std::string_view to_string(Outcome o)
{
    switch (o) {
    case Outcome::Success: return "Success";
    case Outcome::Canceled: return "Canceled";
    case Outcome::Failed: return "Failed";
    }
    return "?";
}

inline std::optional<Outcome> parse_outcome(std::string_view s)
{
    if (s == "Success") return Outcome::Success;
    if (s == "Canceled") return Outcome::Canceled;
    if (s == "Failed") return Outcome::Failed;
    return std::nullopt;
}

enum class TimerKind { Response, Timeout, Commit };

constexpr std::string_view to_string(TimerKind k)
{
    switch (k) {
    case TimerKind::Response: return "Response";
    case TimerKind::Timeout: return "Timeout";
    case TimerKind::Commit: return "Commit";
    }
    return "?";
}

struct TimerConfig {
    Micros response = from_ms(40);
    // nullopt means the Timeout timer never fires.
    std::optional<Micros> timeout = from_ms(100);
    Micros commit = from_ms(200);

    void validate() const
    {
        if (response.count() <= 0 || commit.count() <= 0)
            throw Error(ErrorCode::InvalidConfig, "timer durations must be positive");
        if (timeout) {
            if (timeout->count() <= 0)
                throw Error(ErrorCode::InvalidConfig, "timeout must be positive");
            if (commit < 2 * *timeout)
                throw Error(ErrorCode::InvalidConfig, "commit must be at least twice the timeout");
        }
    }
};

} // namespace lrw

template <>
struct std::hash<lrw::NodeId> {
    std::size_t operator()(lrw::NodeId id) const noexcept { return std::hash<std::uint32_t>{}(id.value); }
};

#endif // LRW_CORE_HPP
