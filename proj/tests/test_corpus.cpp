#include <gtest/gtest.h>

#include <random>

#include "seridst/corpus_io.hpp"
#include "test_support.hpp"

using namespace seridst;
using testing_support::fixture;

namespace {

SlotName slot(const std::string& s) { return SlotName::from(s); }
SlotValue val(const std::string& s) { return SlotValue::concrete(s); }

BeliefState state(std::initializer_list<std::pair<const char*, const char*>> pairs) {
    BeliefState b;
    for (const auto& [k, v] : pairs) b.set(slot(k), std::string(v) == "dontcare" ? SlotValue::dont_care() : val(v));
    return b;
}

BeliefState random_state(std::mt19937& rng) {
    static const std::vector<std::string> values = {"a", "b", "c", "dontcare"};
    const auto& slots = schema_slots();
    BeliefState b;
    std::uniform_int_distribution<int> count(0, 4);
    std::uniform_int_distribution<std::size_t> pick_slot(0, slots.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_value(0, values.size() - 1);
    for (int i = count(rng); i > 0; --i) {
        const auto& v = values[pick_value(rng)];
        b.set(slots[pick_slot(rng)], v == "dontcare" ? SlotValue::dont_care() : val(v));
    }
    return b;
}

}  // namespace

TEST(SlotName, ParsesDomainSlotPairs) {
    const auto s = SlotName::parse("hotel-pricerange");
    ASSERT_TRUE(s);
    EXPECT_EQ(s->domain, "hotel");
    EXPECT_EQ(s->slot, "pricerange");
    EXPECT_EQ(s->str(), "hotel-pricerange");
    EXPECT_FALSE(SlotName::parse("hotel"));
    EXPECT_FALSE(SlotName::parse("-area"));
    EXPECT_FALSE(SlotName::parse("Hotel Area"));
    EXPECT_THROW(SlotName::from("bad name"), SchemaError);
}

TEST(Schema, HasThirtySlotsOverFiveDomains) {
    EXPECT_EQ(schema_slots().size(), 30u);
    EXPECT_TRUE(std::is_sorted(schema_slots().begin(), schema_slots().end()));
    EXPECT_EQ(domain_slots("attraction").size(), 3u);
    EXPECT_EQ(domain_slots("hotel").size(), 10u);
    EXPECT_EQ(domain_slots("restaurant").size(), 7u);
    EXPECT_EQ(domain_slots("taxi").size(), 4u);
    EXPECT_EQ(domain_slots("train").size(), 6u);
}

TEST(BeliefState, RendersSortedPairsOrNone) {
    EXPECT_EQ(BeliefState{}.render(), "None");
    EXPECT_EQ(state({{"taxi-leave", "17:00"}, {"hotel-area", "dontcare"}}).render(),
              "hotel-area : dontcare, taxi-leave : 17:00");
}

TEST(BeliefState, RestrictionKeepsOnlyOneDomain) {
    const auto b = state({{"hotel-area", "north"}, {"taxi-leave", "17:00"}, {"hotel-stars", "4"}});
    const auto r = b.restricted_to("hotel");
    EXPECT_EQ(r.size(), 2u);
    EXPECT_FALSE(r.has_domain("taxi"));
    EXPECT_EQ(b.domains(), (std::set<std::string>{"hotel", "taxi"}));
}

TEST(SlotValue, ConcreteMustBeNonEmpty) {
    EXPECT_THROW(SlotValue::concrete(""), SchemaError);
    EXPECT_TRUE(SlotValue::dont_care().is_dont_care());
    EXPECT_FALSE(val("x") == SlotValue::dont_care());
}

TEST(Normalize, FoldsCaseWhitespaceAndEdgePunctuation) {
    EXPECT_EQ(fold_text("  The  Cambridge   Belfry. "), "the cambridge belfry");
    EXPECT_EQ(fold_text("'centre'"), "centre");
    EXPECT_EQ(fold_text("12:30"), "12:30");
}

TEST(Normalize, MapsVariantsToCanonicalValues) {
    const auto& table = Canonicalizer::shared();
    const auto s = slot("hotel-area");
    EXPECT_EQ(normalize_value(s, "Center", table)->text(), "centre");
    EXPECT_EQ(normalize_value(s, "city centre", table)->text(), "centre");
    EXPECT_EQ(normalize_value(slot("hotel-type"), "guest house", table)->text(), "guesthouse");
    EXPECT_EQ(normalize_value(slot("hotel-pricerange"), "moderately priced", table)->text(), "moderate");
    EXPECT_TRUE(normalize_value(s, "don't care", table)->is_dont_care());
    EXPECT_TRUE(normalize_value(s, "dont care", table)->is_dont_care());
    EXPECT_TRUE(normalize_value(s, "any", table)->is_dont_care());
    EXPECT_FALSE(normalize_value(s, "not mentioned", table));
    EXPECT_FALSE(normalize_value(s, "none", table));
    EXPECT_FALSE(normalize_value(s, "", table));
}

TEST(Normalize, IsIdempotent) {
    const auto& table = Canonicalizer::shared();
    for (const char* raw : {"Center", "guest houses", "Theater", "moderately", "Free", "Pizza Hut City Centre", "19:45",
                            "do n't care"}) {
        const auto once = normalize_value(slot("attraction-name"), raw, table);
        ASSERT_TRUE(once) << raw;
        const auto twice = normalize_value(slot("attraction-name"), once->render(), table);
        ASSERT_TRUE(twice) << raw;
        EXPECT_EQ(*once, *twice) << raw;
    }
}

TEST(Normalize, BuiltinTableMatchesDataFile) {
    const auto builtin = Canonicalizer::builtin();
    const auto from_file = Canonicalizer::from_file(testing_support::data_dir() / "canonical_values.tsv");
    EXPECT_EQ(builtin.version(), from_file.version());
    EXPECT_EQ(builtin.size(), from_file.size());
    for (const char* v : {"center", "guest houses", "theater", "pool", "inexpensive", "portugese", "boating"})
        EXPECT_EQ(builtin.canonical(v), from_file.canonical(v)) << v;
}

TEST(Normalize, RejectsInconsistentTables) {
    EXPECT_THROW(Canonicalizer::from_string("# version\tv\ncentre\tcenter\ncenter\tcentre\n"), ConfigError);
    EXPECT_THROW(Canonicalizer::from_string("# version\tv\nfoo\tbar.\n"), ConfigError);
    EXPECT_THROW(Canonicalizer::from_string("no tab here\n"), ConfigError);
}

TEST(Accumulate, LaterValuesOverwriteAndNothingIsDeleted) {
    const auto b = accumulate_states({state({{"hotel-area", "north"}, {"hotel-stars", "4"}}), state({{"hotel-area", "east"}}),
                                      BeliefState{}});
    EXPECT_EQ(b, state({{"hotel-area", "east"}, {"hotel-stars", "4"}}));
}

TEST(Accumulate, PropertiesHoldOnRandomSequences) {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<BeliefState> seq;
        const int n = static_cast<int>(rng() % 6);
        for (int i = 0; i < n; ++i) seq.push_back(random_state(rng));
        const auto whole = accumulate_states(seq);
        // Associativity: folding a prefix first changes nothing.
        for (int cut = 0; cut <= n; ++cut) {
            std::vector<BeliefState> regrouped{accumulate_states(std::span(seq).first(cut))};
            regrouped.insert(regrouped.end(), seq.begin() + cut, seq.end());
            ASSERT_EQ(accumulate_states(regrouped), whole);
        }
        // Idempotence.
        ASSERT_EQ(accumulate_states({whole, whole}), whole);
        // Prefix property: every slot of B_t survives into B_{t+1}.
        BeliefState prev;
        for (int t = 1; t <= n; ++t) {
            const auto cur = accumulate_states(std::span(seq).first(t));
            for (const auto& [name, _] : prev) ASSERT_TRUE(cur.contains(name));
            prev = cur;
        }
    }
}

TEST(CorpusIo, LoadsSimpleFixture) {
    const auto corpus = load_corpus(fixture("dialogues.jsonl"), "jsonl-simple");
    EXPECT_EQ(corpus.size(), 12u);
    EXPECT_EQ(corpus.domain_set(), (std::set<std::string>{"attraction", "hotel", "restaurant", "taxi", "train"}));
    EXPECT_FALSE(corpus.has_splits());
    const auto* d12 = corpus.find("d12");
    ASSERT_NE(d12, nullptr);
    EXPECT_TRUE(d12->turns[2].gold_turn_state.find(slot("hotel-area"))->is_dont_care());
    EXPECT_EQ(d12->turns.back().gold_accumulated.size(), 8u);
    EXPECT_EQ(corpus.normalization_table_version(), Canonicalizer::shared().version());
}

TEST(CorpusIo, RejectsAccumulationMismatch) {
    try {
        load_corpus(fixture("invalid_accumulation.jsonl"), "jsonl-simple");
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.dialogue_id(), "d01");
        EXPECT_EQ(e.turn_index(), 2);
    }
}

TEST(CorpusIo, RejectsBrokenInputs) {
    EXPECT_THROW(load_corpus(fixture("invalid_turn_gap.jsonl"), "jsonl-simple"), SchemaError);
    EXPECT_THROW(load_corpus(fixture("invalid_domain.jsonl"), "jsonl-simple"), SchemaError);
    EXPECT_THROW(load_corpus(fixture("invalid_json.jsonl"), "jsonl-simple"), SchemaError);
    EXPECT_THROW(load_corpus(fixture("missing.jsonl"), "jsonl-simple"), IoError);
    EXPECT_THROW(load_corpus(fixture("dialogues.jsonl"), "csv"), ConfigError);
}

TEST(CorpusIo, LoadsMultiwozLayoutWithSplitsAndDifferencing) {
    const auto corpus = load_corpus(fixture("multiwoz"), "multiwoz-2.1");
    EXPECT_EQ(corpus.size(), 3u);
    const auto* hotel = corpus.find("MUL0001.json");
    ASSERT_NE(hotel, nullptr);
    EXPECT_EQ(hotel->split, "test");
    ASSERT_EQ(hotel->turns.size(), 2u);
    EXPECT_EQ(hotel->turns[0].gold_turn_state,
              state({{"hotel-pricerange", "cheap"}, {"hotel-type", "guesthouse"}, {"hotel-area", "north"}}));
    EXPECT_EQ(hotel->turns[1].gold_turn_state, state({{"hotel-people", "2"}, {"hotel-day", "friday"}}));
    EXPECT_EQ(hotel->turns[1].gold_accumulated.size(), 5u);

    const auto* train = corpus.find("SNG0002.json");
    EXPECT_EQ(train->split, "train");
    EXPECT_EQ(train->turns[0].gold_turn_state, state({{"train-departure", "cambridge"}, {"train-leave", "10:00"}}));
    EXPECT_EQ(train->turns[1].gold_turn_state, state({{"train-destination", "ely"}, {"train-arrive", "12:00"}}));

    const auto* attraction = corpus.find("SNG0003.json");
    EXPECT_EQ(attraction->split, "dev");
    EXPECT_EQ(attraction->turns[0].gold_turn_state, state({{"attraction-type", "museum"}, {"attraction-area", "centre"}}));

    EXPECT_EQ(select_split(corpus, "test").size(), 1u);
    EXPECT_EQ(select_split(corpus, "all").size(), 3u);
}

TEST(CorpusIo, DuplicateIdsAreRejected) {
    Dialogue d;
    d.id = "x";
    d.turns.push_back({1, "hi", "hello", {}, {}});
    validate_dialogue(d);
    EXPECT_THROW(Corpus({d, d}), SchemaError);
}

TEST(ExcludeDomain, DropsEveryDialogueTouchingTarget) {
    const auto corpus = load_corpus(fixture("dialogues.jsonl"), "jsonl-simple");
    for (const auto& domain : kKnownDomains) {
        const auto rest = exclude_domain(corpus, domain);
        std::size_t with_target = 0;
        for (const auto& d : corpus.dialogues()) with_target += d.has_domain(domain) ? 1 : 0;
        EXPECT_EQ(rest.size() + with_target, corpus.size()) << domain;
        for (const auto& d : rest.dialogues()) {
            EXPECT_FALSE(d.has_domain(domain)) << d.id;
            for (const auto& t : d.turns) EXPECT_FALSE(t.gold_accumulated.has_domain(domain));
        }
    }
    EXPECT_THROW(exclude_domain(corpus, "hospital"), UnknownDomain);
}

TEST(TestInstances, CarryOnePriorExchange) {
    const auto corpus = load_corpus(fixture("dialogues.jsonl"), "jsonl-simple");
    const auto instances = build_test_instances(corpus, "taxi");
    std::size_t expected = 0;
    for (const auto& d : corpus.dialogues())
        if (d.has_domain("taxi")) expected += d.turns.size();
    ASSERT_EQ(instances.size(), expected);
    EXPECT_EQ(instances[0].dialogue_id, "d04");
    EXPECT_FALSE(instances[0].has_history());
    EXPECT_EQ(instances[0].render_history(), "None");
    EXPECT_EQ(instances[1].render_history(),
              "[user] i need a taxi to pick me up from the train station [system] where are you going?");
    EXPECT_THROW(build_test_instances(exclude_domain(corpus, "taxi"), "taxi"), EmptySelection);
    EXPECT_THROW(build_test_instances(corpus, "police"), UnknownDomain);
}
