#include "lrw/consensus.hpp"

#include <gtest/gtest.h>

using namespace lrw;

namespace {

using Vec = std::vector<std::optional<Value>>;

Vec vec(std::initializer_list<Value> xs)
{
    Vec v;
    for (Value x : xs)
        v.emplace_back(x);
    return v;
}

} // namespace

TEST(WriteAllUvw, MixedInputsAgree)
{
    const auto r = consensus_writeall_uvw(0, 1);
    EXPECT_EQ(r.schedules, 6u);
    for (const auto& d : r.decision_vectors)
        EXPECT_TRUE(d == vec({0, 0}) || d == vec({1, 1}));
    EXPECT_TRUE(r.write_once);
}

TEST(WriteAllUvw, ExplicitSchedules)
{
    WriteAllUvwConsensus proto(0, 1);
    // p writes and decides before q does anything.
    EXPECT_EQ(run_schedule(proto, {0, 0, 1, 1}), vec({0, 0}));
    EXPECT_EQ(run_schedule(proto, {1, 1, 0, 0}), vec({1, 1}));
    // q writes first, so p finds its own input in v and adopts w.
    EXPECT_EQ(run_schedule(proto, {1, 0, 0, 1}), vec({1, 1}));
    EXPECT_EQ(run_schedule(proto, {0, 1, 0, 1}), vec({0, 0}));
}

TEST(WriteAllUvw, ExhaustedNodeCannotStep)
{
    EXPECT_THROW(run_schedule(WriteAllUvwConsensus(0, 1), {0, 0, 0}), Error);
}

TEST(LrwConsensusTest, MixedInputsAlwaysAgree)
{
    const auto r = consensus_lrw({0, 1});
    EXPECT_EQ(r.schedules, 6u);
    EXPECT_FALSE(r.decision_vectors.contains(vec({0, 1})));
    EXPECT_FALSE(r.decision_vectors.contains(vec({1, 0})));
    EXPECT_TRUE(verify_consensus(r, {0, 1}).ok());
}

TEST(LrwConsensusTest, AllInputPairs)
{
    for (Value a : {0, 1})
        for (Value b : {0, 1}) {
            const auto r = consensus_lrw({a, b});
            EXPECT_TRUE(verify_consensus(r, {a, b}).ok()) << a << b;
            if (a == b) {
                ASSERT_EQ(r.decision_vectors.size(), 1u);
                EXPECT_EQ(*r.decision_vectors.begin(), vec({a, a}));
            }
        }
}

TEST(LrwConsensusTest, FirstInitiatorWins)
{
    LrwConsensus proto({0, 1});
    EXPECT_EQ(run_schedule(proto, {0, 1, 0, 1}), vec({0, 0}));
    EXPECT_EQ(run_schedule(proto, {1, 0, 1, 0}), vec({1, 1}));
}

TEST(LrwConsensusTest, SingleNodeHasOneSchedule)
{
    const auto r = consensus_lrw({1});
    EXPECT_EQ(r.schedules, 1u);
    EXPECT_EQ(*r.decision_vectors.begin(), vec({1}));
}

// Three programs of two steps: 6! / (2! 2! 2!) interleavings.
TEST(LrwConsensusTest, ThreeNodesExploresEveryInterleaving)
{
    const auto r = consensus_lrw({0, 1, 1});
    EXPECT_EQ(r.schedules, 90u);
    EXPECT_EQ(r.longest_schedule, 6u);
    EXPECT_TRUE(verify_consensus(r, {0, 1, 1}).ok());
}

TEST(LrwConsensusTest, RejectsBadSizes)
{
    EXPECT_THROW(LrwConsensus({}), Error);
    EXPECT_THROW(LrwConsensus({0, 1, 0, 1}), Error);
}

TEST(Explorer, ScheduleCapThrows)
{
    try {
        explore_interleavings(LrwConsensus({0, 1, 1}), 64, 10);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::StateSpaceExceeded);
    }
    EXPECT_THROW(explore_interleavings(LrwConsensus({0, 1}), 3), Error);
}

TEST(Verdict, FlagsEachProperty)
{
    ExplorationResult r;
    r.decision_vectors = {vec({0, 1})};
    EXPECT_FALSE(verify_consensus(r, {0, 1}).agreement);
    r.decision_vectors = {vec({2, 2})};
    EXPECT_FALSE(verify_consensus(r, {0, 1}).validity);
    r.decision_vectors = {Vec{0, std::nullopt}};
    EXPECT_FALSE(verify_consensus(r, {0, 1}).termination);
    r.decision_vectors = {vec({1, 1})};
    r.write_once = false;
    EXPECT_FALSE(verify_consensus(r, {0, 1}).ok());
}

TEST(ConsensusNodeTest, DecisionIsWriteOnce)
{
    ConsensusNode n;
    n.decide(1);
    n.decide(0);
    EXPECT_EQ(n.decision, 1);
    EXPECT_EQ(n.decision_writes, 2);
}
