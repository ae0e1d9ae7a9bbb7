#include "lrw/core.hpp"

#include "gen.hpp"

#include <gtest/gtest.h>

#include <unordered_set>

using namespace lrw;

namespace {

LrwSpec spec_writing(std::vector<std::string> vars, std::size_t b_len, std::size_t payload_bytes)
{
    LrwSpec s;
    s.write_vars = std::move(vars);
    s.payload_bytes = payload_bytes;
    s.evaluate = [b_len](const VarSnapshot&, std::span<const Value>) -> Evaluation {
        return Response{0, std::vector<Value>(b_len, 1)};
    };
    s.aggregate = [](std::span<const Value>) { return true; };
    return s;
}

} // namespace

TEST(ValidateSpec, ThreeVarsMatchingWritesWithinPayloadIsOk)
{
    EXPECT_EQ(validate_spec(spec_writing({"a", "b", "c"}, 3, 20), true), std::nullopt);
}

TEST(ValidateSpec, PayloadAboveLimitRejectedInStrictMode)
{
    EXPECT_EQ(validate_spec(spec_writing({"v"}, 1, 40), true), ErrorCode::PayloadTooLarge);
    EXPECT_EQ(validate_spec(spec_writing({"v"}, 1, 40), false), std::nullopt);
    EXPECT_EQ(validate_spec(spec_writing({"v"}, 1, 28), true), std::nullopt);
}

TEST(ValidateSpec, WriteArityMismatch)
{
    EXPECT_EQ(validate_spec(spec_writing({"u", "v"}, 1, 8), false), ErrorCode::WriteArityMismatch);
}

TEST(ValidateSpec, NegativeResponseIsNotAnArityError)
{
    LrwSpec s = spec_writing({"u", "v"}, 2, 8);
    s.evaluate = [](const VarSnapshot&, std::span<const Value>) -> Evaluation { return std::nullopt; };
    EXPECT_EQ(validate_spec(s, true), std::nullopt);
}

TEST(ApplyCommit, SingleAssignment)
{
    VarStore s{{"v", 0}};
    s.stage(PendingWrite{{"v"}, {7}, NodeId{1}, 1});
    VarStore out = apply_commit(s);
    EXPECT_EQ(out.read("v"), 7);
    EXPECT_FALSE(out.has_pending());
}

TEST(ApplyCommit, AlignedAssignment)
{
    VarStore s{{"u", 1}, {"v", 2}};
    s.stage(PendingWrite{{"u", "v"}, {3, 4}, NodeId{1}, 1});
    VarStore out = apply_commit(s);
    EXPECT_EQ(out.read("u"), 3);
    EXPECT_EQ(out.read("v"), 4);
}

TEST(ApplyCommit, NoPendingWrite)
{
    try {
        apply_commit(VarStore{{"v", 0}});
        FAIL() << "expected NoPendingWrite";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoPendingWrite);
    }
}

TEST(VarStore, SecondStageRejected)
{
    VarStore s;
    s.stage(PendingWrite{{"v"}, {1}, NodeId{1}, 1});
    EXPECT_THROW(s.stage(PendingWrite{{"v"}, {2}, NodeId{2}, 1}), Error);
}

TEST(VarStore, MisalignedStageRejected)
{
    VarStore s;
    try {
        s.stage(PendingWrite{{"u", "v"}, {1}, NodeId{1}, 1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::WriteArityMismatch);
    }
}

// Property: whatever sequence of set/stage/discard/commit runs, reads only ever
// reflect values that were set directly or committed.
TEST(VarStoreProperty, TentativeWritesInvisibleUntilCommit)
{
    gen::for_all(11, 300, [](gen::Source& g, int) {
        VarStore store;
        std::map<std::string, Value> model; // committed view
        std::optional<std::pair<std::vector<std::string>, std::vector<Value>>> staged;
        for (int step = 0; step < 40; ++step) {
            const int op = static_cast<int>(g.range(0, 3));
            if (op == 0) {
                auto name = g.var_name();
                Value v = g.range(-50, 50);
                store.set(name, v);
                model[name] = v;
            } else if (op == 1 && !staged) {
                std::vector<std::string> vars;
                std::vector<Value> vals;
                for (int k = 0, n = static_cast<int>(g.range(1, 3)); k < n; ++k) {
                    vars.push_back(g.var_name());
                    vals.push_back(g.range(100, 200));
                }
                store.stage(PendingWrite{vars, vals, NodeId{1}, 1});
                staged = std::pair{vars, vals};
            } else if (op == 2 && staged) {
                store.discard();
                staged.reset();
            } else if (op == 3 && staged) {
                store.commit();
                for (std::size_t i = 0; i < staged->first.size(); ++i)
                    model[staged->first[i]] = staged->second[i];
                staged.reset();
            }
            for (char c = 'a'; c <= 'f'; ++c) {
                const std::string name(1, c);
                auto it = model.find(name);
                ASSERT_EQ(store.read(name), it == model.end() ? std::nullopt : std::optional<Value>(it->second));
            }
            ASSERT_EQ(store.has_pending(), staged.has_value());
        }
    });
}

TEST(NodeId, ComparableAndHashable)
{
    std::unordered_set<NodeId> s{NodeId{3}, NodeId{1}, NodeId{3}};
    EXPECT_EQ(s.size(), 2u);
    EXPECT_LT(NodeId{1}, NodeId{2});
    EXPECT_EQ(NodeId{5}, NodeId{5});
}

TEST(TimerConfig, CommitMustBeTwiceTimeout)
{
    TimerConfig t;
    t.timeout = from_ms(100);
    t.commit = from_ms(199);
    EXPECT_THROW(t.validate(), Error);
    t.commit = from_ms(200);
    EXPECT_NO_THROW(t.validate());
    t.timeout = std::nullopt;
    t.commit = from_ms(1);
    EXPECT_NO_THROW(t.validate());
}

TEST(TimerConfig, ResponseDefaultsToForty)
{
    EXPECT_EQ(TimerConfig{}.response, from_ms(40));
}

TEST(MessageRoles, BroadcastKindsAreInitAndAbort)
{
    EXPECT_TRUE(is_broadcast_kind(MsgKind::InitMsg));
    EXPECT_TRUE(is_broadcast_kind(MsgKind::AbortMsg));
    EXPECT_FALSE(is_broadcast_kind(MsgKind::AcceptMsg));
    EXPECT_FALSE(is_broadcast_kind(MsgKind::RejectMsg));
    EXPECT_FALSE(is_broadcast_kind(MsgKind::AbortAck));
}

TEST(Outcome, RoundTripsThroughText)
{
    for (Outcome o : {Outcome::Success, Outcome::Canceled, Outcome::Failed})
        EXPECT_EQ(parse_outcome(to_string(o)), o);
    EXPECT_EQ(parse_outcome("nope"), std::nullopt);
}

TEST(Units, MillisecondConversion)
{
    EXPECT_EQ(from_ms(1.5).count(), 1500);
    EXPECT_DOUBLE_EQ(to_ms(Micros{2500}), 2.5);
}
