#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "agepred/ingest.hpp"
#include "helpers.hpp"

using namespace agepred;
using namespace agepred::ingest;
using testutil::TempDir;

// ---------------------------------------------------------------------------
// extract_age
// ---------------------------------------------------------------------------

TEST_CASE("extract_age finds a single unambiguous age") {
  CHECK(extract_age("coffee lover, 23 years old, runner") == 23);
  CHECK(extract_age("23 yrs old and proud") == 23);
  CHECK(extract_age("I'm 19yo") == 19);
  CHECK(extract_age("19 y/o from TX") == 19);
  CHECK(extract_age("age: 34") == 34);
  CHECK(extract_age("age 34, engineer") == 34);
  CHECK(extract_age("tengo 45 años") == 45);
  CHECK(extract_age("AGE: 27") == 27);  // case-insensitive
}

TEST_CASE("extract_age returns absent when nothing matches") {
  CHECK_FALSE(extract_age("est. 1999").has_value());
  CHECK_FALSE(extract_age("").has_value());
  CHECK_FALSE(extract_age("I love old movies").has_value());
  CHECK_FALSE(extract_age("100 years old christmas tradition").has_value());  // 3 digits
  CHECK_FALSE(extract_age("age: 234").has_value());                           // 3 digits
  CHECK_FALSE(extract_age("05 years old").has_value());  // below the valid range
}

TEST_CASE("extract_age returns absent on conflicting matches") {
  CHECK_FALSE(extract_age("17 years old... or maybe 71 years old").has_value());
  CHECK_FALSE(extract_age("age: 25 but 52 years old at heart").has_value());
}

TEST_CASE("extract_age accepts repeated identical ages") {
  // Two matches of the same value are not a conflict.
  CHECK(extract_age("23 years old. yes, 23 yo.") == 23);
}

TEST_CASE("extract_age is pure") {
  const std::string text = "happy, 31 years old";
  const auto a = extract_age(text);
  const auto b = extract_age(text);
  CHECK(a == b);
  CHECK(a == 31);
}

// ---------------------------------------------------------------------------
// expand_popular_users
// ---------------------------------------------------------------------------

namespace {

PopularUser seed_user(const std::string& id) {
  PopularUser p;
  p.user_id = id;
  p.screen_name = id;
  return p;
}

UserRecord profile(const std::string& id) {
  UserRecord u;
  u.user_id = id;
  u.name = "user " + id;
  return u;
}

}  // namespace

TEST_CASE("expand_popular_users walks exactly one hop") {
  const std::map<std::string, std::vector<std::string>> friends = {
      {"A", {"B", "C"}}, {"B", {"C", "D"}}, {"C", {"E"}}};
  const FriendLookup friend_lookup = [&](const std::string& id)
      -> std::optional<std::vector<std::string>> {
    const auto it = friends.find(id);
    if (it == friends.end()) return std::nullopt;
    return it->second;
  };
  const ProfileLookup profile_lookup = [](const std::string& id) -> std::optional<UserRecord> {
    return profile(id);
  };

  SECTION("single seed") {
    const auto out = expand_popular_users({seed_user("A")}, friend_lookup, profile_lookup);
    REQUIRE(out.size() == 2);
    CHECK(out[0].user_id == "B");
    CHECK(out[1].user_id == "C");  // E (friend of C) never fetched: one hop only
  }
  SECTION("two seeds dedupe and exclude seeds") {
    const auto out =
        expand_popular_users({seed_user("A"), seed_user("B")}, friend_lookup, profile_lookup);
    REQUIRE(out.size() == 2);
    CHECK(out[0].user_id == "C");  // B excluded as seed, C deduplicated
    CHECK(out[1].user_id == "D");
  }
  SECTION("empty friend list expands to nothing") {
    const FriendLookup empty_lookup =
        [](const std::string&) -> std::optional<std::vector<std::string>> {
      return std::vector<std::string>{};
    };
    CHECK(expand_popular_users({seed_user("A")}, empty_lookup, profile_lookup).empty());
  }
  SECTION("lookup failures skip, not fatal") {
    const auto out =
        expand_popular_users({seed_user("A"), seed_user("Z")}, friend_lookup, profile_lookup);
    REQUIRE(out.size() == 2);  // Z's friend lookup failed; A's hop survives

    const ProfileLookup flaky = [](const std::string& id) -> std::optional<UserRecord> {
      if (id == "B") return std::nullopt;
      return profile(id);
    };
    const auto partial = expand_popular_users({seed_user("A")}, friend_lookup, flaky);
    REQUIRE(partial.size() == 1);
    CHECK(partial[0].user_id == "C");
  }
  SECTION("empty seed set is an error") {
    CHECK_THROWS_AS(expand_popular_users({}, friend_lookup, profile_lookup),
                    std::invalid_argument);
  }
  SECTION("output never contains a seed id and is bounded by friend-list total") {
    const auto out =
        expand_popular_users({seed_user("A"), seed_user("B")}, friend_lookup, profile_lookup);
    for (const auto& u : out) {
      CHECK(u.user_id != "A");
      CHECK(u.user_id != "B");
    }
    CHECK(out.size() <= 4);  // |friends(A)| + |friends(B)|
  }
}

// ---------------------------------------------------------------------------
// link_entity
// ---------------------------------------------------------------------------

TEST_CASE("link_entity keeps only annotations inside the name span") {
  FixtureAnnotationClient client;
  client.add("Katy Perry", "db:Katy_Perry", 0.95);

  SECTION("name match links") {
    const auto uri = link_entity("Katy Perry", "singer", client, 0.8);
    REQUIRE(uri.has_value());
    CHECK(*uri == "db:Katy_Perry");
  }
  SECTION("description-only match does not link") {
    CHECK_FALSE(link_entity("fan acct", "I love Katy Perry", client, 0.8).has_value());
  }
  SECTION("empty name never links") {
    CHECK_FALSE(link_entity("", "Katy Perry", client, 0.8).has_value());
  }
  SECTION("surface overflowing the name boundary does not link") {
    // "Katy Perry" starts inside the name but spills into the description.
    CHECK_FALSE(link_entity("Katy", "Perry fan", client, 0.8).has_value());
  }
  SECTION("confidence threshold filters") {
    CHECK(link_entity("Katy Perry", "", client, 0.95).has_value());
    CHECK_FALSE(link_entity("Katy Perry", "", client, 0.96).has_value());
  }
  SECTION("confidence outside (0,1] rejected") {
    CHECK_THROWS_AS(link_entity("Katy Perry", "", client, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(link_entity("Katy Perry", "", client, 1.5), std::invalid_argument);
  }
}

TEST_CASE("link_entity picks the earliest annotation") {
  FixtureAnnotationClient client;
  client.add("Taylor Swift", "db:Taylor_Swift", 0.9);
  client.add("Swift", "db:Swift_(bird)", 0.9);
  const auto uri = link_entity("Taylor Swift", "", client, 0.8);
  REQUIRE(uri.has_value());
  CHECK(*uri == "db:Taylor_Swift");  // offset 0 beats offset 7
}

TEST_CASE("raising the confidence threshold only shrinks the linkable set") {
  FixtureAnnotationClient client;
  client.add("Alpha", "db:Alpha", 0.85);
  client.add("Bravo", "db:Bravo", 0.99);
  client.add("Charlie", "db:Charlie", 0.5);

  const std::vector<std::string> names = {"Alpha", "Bravo", "Charlie", "Delta"};
  for (const auto& name : names) {
    const auto strict = link_entity(name, "", client, 1.0);
    const auto loose = link_entity(name, "", client, 0.8);
    if (strict.has_value()) {
      REQUIRE(loose.has_value());  // strict links form a subset of loose links
      CHECK(*strict == *loose);
    }
  }
}

TEST_CASE("client failure yields absent, not an exception") {
  struct ThrowingClient : AnnotationClient {
    std::vector<Annotation> annotate(std::string_view, double) const override {
      throw std::runtime_error("service unavailable");
    }
  } client;
  CHECK_FALSE(link_entity("Katy Perry", "singer", client, 0.8).has_value());
}

// ---------------------------------------------------------------------------
// age_at / enrich_popular
// ---------------------------------------------------------------------------

TEST_CASE("age_at uses birthday-adjusted year difference") {
  const Date reference = *parse_date("2017-01-01");
  CHECK(age_at(*parse_date("1984-10-25"), reference) == 32);
  CHECK(age_at(*parse_date("2017-01-01"), reference) == 0);
  CHECK(age_at(*parse_date("1984-01-01"), reference) == 33);  // birthday on the reference day
  CHECK(age_at(*parse_date("1984-01-02"), reference) == 32);  // birthday one day later
  CHECK(age_at(*parse_date("2018-06-01"), reference) < 0);    // future birth dates go negative
}

TEST_CASE("enrich_popular attaches types and ages from the fixture") {
  KbFixture fixture;
  fixture.entities["db:Katy_Perry"] = KbEntry{{"db:Person", "db:MusicalArtist"},
                                              parse_date("1984-10-25")};
  fixture.entities["db:NASA"] = KbEntry{{"db:Organisation"}, std::nullopt};

  FixtureAnnotationClient client;
  client.add("Katy Perry", "db:Katy_Perry", 1.0);
  client.add("NASA", "db:NASA", 1.0);
  client.add("Ghost", "db:Ghost", 1.0);  // linked but missing from the fixture

  UserRecord kp = profile("kp");
  kp.name = "Katy Perry";
  UserRecord nasa = profile("nasa");
  nasa.name = "NASA";
  UserRecord ghost = profile("ghost");
  ghost.name = "Ghost";
  UserRecord plain = profile("plain");
  plain.name = "someone unlinked";

  const auto out = enrich_popular({kp, nasa, ghost, plain}, fixture, client,
                                  *parse_date("2017-01-01"));
  REQUIRE(out.size() == 4);

  CHECK(out[0].kb_entity_uri == "db:Katy_Perry");
  CHECK(out[0].kb_types == std::set<std::string>{"db:Person", "db:MusicalArtist"});
  REQUIRE(out[0].age_years.has_value());
  CHECK(*out[0].age_years == 32);

  CHECK(out[1].kb_entity_uri == "db:NASA");
  CHECK(out[1].kb_types == std::set<std::string>{"db:Organisation"});
  CHECK_FALSE(out[1].age_years.has_value());  // no birth date in the fixture

  CHECK(out[2].kb_entity_uri == "db:Ghost");
  CHECK(out[2].kb_types.empty());  // entity absent from fixture: no data

  CHECK_FALSE(out[3].kb_entity_uri.has_value());
  CHECK(out[3].kb_types.empty());

  for (const auto& p : out) CHECK(p.invariant_violations().empty());
}

TEST_CASE("enrich_popular drops negative ages") {
  KbFixture fixture;
  fixture.entities["db:Future"] = KbEntry{{"db:Person"}, parse_date("2020-01-01")};
  FixtureAnnotationClient client;
  client.add("Future", "db:Future", 1.0);

  UserRecord u = profile("f");
  u.name = "Future";
  const auto out = enrich_popular({u}, fixture, client, *parse_date("2017-01-01"));
  REQUIRE(out.size() == 1);
  CHECK_FALSE(out[0].age_years.has_value());
  CHECK_FALSE(out[0].birth_date.has_value());
}

TEST_CASE("birth date equal to reference date gives age zero") {
  KbFixture fixture;
  fixture.entities["db:Newborn"] = KbEntry{{"db:Person"}, parse_date("2017-01-01")};
  FixtureAnnotationClient client;
  client.add("Newborn", "db:Newborn", 1.0);
  UserRecord u = profile("n");
  u.name = "Newborn";
  const auto out = enrich_popular({u}, fixture, client, *parse_date("2017-01-01"));
  REQUIRE(out.size() == 1);
  REQUIRE(out[0].age_years.has_value());
  CHECK(*out[0].age_years == 0);
}

TEST_CASE("client_from_kb_uris derives surface forms from uri tails") {
  KbFixture fixture;
  fixture.entities["http://dbpedia.org/resource/Katy_Perry"] = KbEntry{{"db:Person"}, {}};
  fixture.entities["db:NASA"] = KbEntry{{"db:Organisation"}, {}};
  const auto client = client_from_kb_uris(fixture);

  const auto hits = client.annotate("Katy Perry follows NASA", 0.8);
  REQUIRE(hits.size() == 2);
  CHECK(hits[0].surface_form == "Katy Perry");
  CHECK(hits[0].entity_uri == "http://dbpedia.org/resource/Katy_Perry");
  CHECK(hits[0].offset == 0);
  CHECK(hits[1].surface_form == "NASA");
}

// ---------------------------------------------------------------------------
// file IO
// ---------------------------------------------------------------------------

TEST_CASE("load_users parses well-formed files and skips invalid records") {
  TempDir dir("ingest_users");

  SECTION("three good lines load as three records") {
    std::vector<UserRecord> users;
    for (int i = 0; i < 3; ++i) {
      UserRecord u = profile("u" + std::to_string(i));
      u.description = std::to_string(20 + i) + " years old";
      u.extracted_age = 20 + i;
      u.friend_ids = {"p1", "p2"};
      u.friends_count = 2;
      users.push_back(u);
    }
    write_users_jsonl(dir.file("ok.jsonl"), users);
    const auto loaded = load_users(dir.file("ok.jsonl"));
    REQUIRE(loaded.records.size() == 3);
    CHECK(loaded.skipped == 0);
    CHECK(loaded.records[1].user_id == "u1");
    CHECK(loaded.records[1].extracted_age == 21);
    CHECK(loaded.records[1].friend_ids == std::vector<std::string>{"p1", "p2"});
  }

  SECTION("invariant violation skips the record and counts it") {
    UserRecord good = profile("g");
    UserRecord bad = profile("b");
    bad.followers_count = -1;
    write_users_jsonl(dir.file("mixed.jsonl"), {good, bad});
    const auto loaded = load_users(dir.file("mixed.jsonl"));
    CHECK(loaded.records.size() == 1);
    CHECK(loaded.skipped == 1);
  }

  SECTION("empty file loads as empty, not an error") {
    std::ofstream(dir.file("empty.jsonl")).close();
    const auto loaded = load_users(dir.file("empty.jsonl"));
    CHECK(loaded.records.empty());
    CHECK(loaded.skipped == 0);
  }

  SECTION("parse error is fatal and names the line") {
    std::ofstream out(dir.file("broken.jsonl"));
    out << R"({"user_id": "ok", "screen_name": "ok", "name": "n", "description": "",)"
        << R"( "followers_count": 1, "friends_count": 0, "friend_ids": [],)"
        << R"( "extracted_age": null})" << "\n";
    out << "{not json\n";
    out.close();
    CHECK_THROWS_WITH(load_users(dir.file("broken.jsonl")),
                      Catch::Matchers::ContainsSubstring(":2: parse error"));
  }

  SECTION("missing file is fatal") {
    CHECK_THROWS(load_users(dir.file("does_not_exist.jsonl")));
  }
}

TEST_CASE("user records round-trip through jsonl") {
  TempDir dir("ingest_roundtrip");
  UserRecord u = profile("rt");
  u.description = "29 years old";
  u.followers_count = 1234;
  u.friends_count = 3;
  u.friend_ids = {"a", "b", "c"};
  u.extracted_age = 29;

  write_users_jsonl(dir.file("u.jsonl"), {u});
  const auto loaded = load_users(dir.file("u.jsonl"));
  REQUIRE(loaded.records.size() == 1);
  const auto& v = loaded.records[0];
  CHECK(v.user_id == u.user_id);
  CHECK(v.name == u.name);
  CHECK(v.description == u.description);
  CHECK(v.followers_count == u.followers_count);
  CHECK(v.friends_count == u.friends_count);
  CHECK(v.friend_ids == u.friend_ids);
  CHECK(v.extracted_age == u.extracted_age);
}

TEST_CASE("kb fixture round-trips and tolerates malformed birth dates") {
  TempDir dir("ingest_kb");

  KbFixture fixture;
  fixture.entities["db:A"] = KbEntry{{"db:Person"}, parse_date("1990-05-05")};
  fixture.entities["db:B"] = KbEntry{{"db:Organisation"}, std::nullopt};
  write_kb_fixture(dir.file("kb.json"), fixture);
  const auto loaded = load_kb_fixture(dir.file("kb.json"));
  REQUIRE(loaded.entities.size() == 2);
  CHECK(loaded.entities.at("db:A").types == std::set<std::string>{"db:Person"});
  REQUIRE(loaded.entities.at("db:A").birth_date.has_value());
  CHECK(format_date(*loaded.entities.at("db:A").birth_date) == "1990-05-05");
  CHECK_FALSE(loaded.entities.at("db:B").birth_date.has_value());

  std::ofstream out(dir.file("malformed.json"));
  out << R"({"db:C": {"types": ["db:Person"], "birth_date": "not-a-date"}})";
  out.close();
  const auto tolerant = load_kb_fixture(dir.file("malformed.json"));
  REQUIRE(tolerant.entities.size() == 1);
  CHECK_FALSE(tolerant.entities.at("db:C").birth_date.has_value());  // warned, treated absent
}

TEST_CASE("annotation fixture file feeds the fixture client") {
  TempDir dir("ingest_ann");
  std::ofstream out(dir.file("ann.json"));
  out << R"({"Katy Perry": {"uri": "db:Katy_Perry", "confidence": 0.9}})";
  out.close();
  const auto client = load_annotation_fixture(dir.file("ann.json"));
  CHECK(client.size() == 1);
  CHECK(link_entity("Katy Perry", "", client, 0.8) == "db:Katy_Perry");
  CHECK_FALSE(link_entity("Katy Perry", "", client, 0.95).has_value());
}
