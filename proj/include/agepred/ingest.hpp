#pragma once

// Loading of user records and knowledge-base side data, self-reported age
// extraction, one-hop expansion of the popular-user pool, and entity linking
// through a pluggable annotation client. Live service clients are out of
// scope; the shipped client is backed by surface-form fixtures.

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "agepred/domain.hpp"
#include "agepred/log.hpp"

namespace agepred::ingest {

using nlohmann::json;

inline constexpr double kDefaultLinkConfidence = 0.8;

// ---------------------------------------------------------------------------
// Age extraction
// ---------------------------------------------------------------------------

// Pulls a self-reported age out of a profile description. Returns a value
// only when every pattern hit agrees on a single age in [10, 99]; two
// conflicting matches are not certain enough to keep.
inline std::optional<int> extract_age(std::string_view description) {
  // Leading (^|[^0-9]) guards keep two-digit captures out of longer digit
  // runs ("est. 1999" must not yield 99).
  static const std::regex patterns[] = {
      std::regex(R"((^|[^0-9])(\d{2})\s*(years?\s*old|yrs?\s*old|y/o|yo))",
                 std::regex::icase),
      std::regex(R"(age[:\s]\s*(\d{2})(?=[^0-9]|$))", std::regex::icase),
      std::regex(R"((^|[^0-9])(\d{2})\s*años)", std::regex::icase),
  };
  static const int digit_group[] = {2, 1, 2};

  const std::string text(description);
  std::set<int> ages;
  for (std::size_t p = 0; p < std::size(patterns); ++p) {
    for (auto it = std::sregex_iterator(text.begin(), text.end(), patterns[p]);
         it != std::sregex_iterator(); ++it) {
      const int age = std::stoi((*it)[digit_group[p]].str());
      if (age >= UserRecord::kMinAge && age <= UserRecord::kMaxAge) ages.insert(age);
    }
  }
  if (ages.size() == 1) return *ages.begin();
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Annotation client
// ---------------------------------------------------------------------------

struct Annotation {
  std::string surface_form;
  std::string entity_uri;
  std::size_t offset = 0;  // character offset into the annotated text
};

class AnnotationClient {
 public:
  virtual ~AnnotationClient() = default;
  // Returns annotations whose confidence is at least `confidence`, ordered
  // by offset. Offsets always lie within `text`.
  virtual std::vector<Annotation> annotate(std::string_view text,
                                           double confidence) const = 0;
};

// Exact-surface-form matcher over a fixture of (surface form, entity,
// confidence) entries. Deterministic: entries are scanned in sorted order
// and hits are returned sorted by offset.
class FixtureAnnotationClient : public AnnotationClient {
 public:
  struct Entry {
    std::string uri;
    double confidence = 1.0;
  };

  void add(std::string surface, std::string uri, double confidence = 1.0) {
    entries_[std::move(surface)] = Entry{std::move(uri), confidence};
  }

  std::size_t size() const { return entries_.size(); }

  std::vector<Annotation> annotate(std::string_view text,
                                   double confidence) const override {
    std::vector<Annotation> out;
    for (const auto& [surface, entry] : entries_) {
      if (surface.empty() || entry.confidence < confidence) continue;
      for (std::size_t pos = text.find(surface); pos != std::string_view::npos;
           pos = text.find(surface, pos + 1)) {
        out.push_back(Annotation{surface, entry.uri, pos});
      }
    }
    std::sort(out.begin(), out.end(), [](const Annotation& a, const Annotation& b) {
      if (a.offset != b.offset) return a.offset < b.offset;
      return a.surface_form < b.surface_form;
    });
    return out;
  }

 private:
  std::map<std::string, Entry> entries_;
};

// ---------------------------------------------------------------------------
// Knowledge-base fixture
// ---------------------------------------------------------------------------

struct KbEntry {
  std::set<std::string> types;
  std::optional<Date> birth_date;
};

struct KbFixture {
  std::map<std::string, KbEntry> entities;  // keyed by entity URI
};

// Derives an annotation fixture from the KB entity URIs themselves, using
// the usual last-segment-with-underscores convention ("…/Katy_Perry" links
// the surface form "Katy Perry" at confidence 1.0). Lets a KB fixture drive
// linking when no separate annotation fixture is supplied.
inline FixtureAnnotationClient client_from_kb_uris(const KbFixture& fixture) {
  FixtureAnnotationClient client;
  for (const auto& [uri, entry] : fixture.entities) {
    const std::size_t cut = uri.find_last_of("/:");
    std::string surface = cut == std::string::npos ? uri : uri.substr(cut + 1);
    std::replace(surface.begin(), surface.end(), '_', ' ');
    if (!surface.empty()) client.add(std::move(surface), uri, 1.0);
  }
  return client;
}

// ---------------------------------------------------------------------------
// One-hop expansion
// ---------------------------------------------------------------------------

using FriendLookup =
    std::function<std::optional<std::vector<std::string>>(const std::string&)>;
using ProfileLookup = std::function<std::optional<UserRecord>(const std::string&)>;

// Union of the profiles of every friend of every seed user, one hop only.
// Seeds themselves are excluded and duplicates collapse. Candidate ids are
// sorted before profile lookup so the output is deterministic regardless of
// how lookups complete.
inline std::vector<UserRecord> expand_popular_users(
    const std::vector<PopularUser>& seeds, const FriendLookup& friend_lookup,
    const ProfileLookup& profile_lookup) {
  if (seeds.empty())
    throw std::invalid_argument("expand_popular_users: seed set is empty");

  std::set<std::string> seed_ids;
  for (const auto& s : seeds) seed_ids.insert(s.user_id);

  std::set<std::string> candidate_ids;
  for (const auto& s : seeds) {
    const auto friends = friend_lookup(s.user_id);
    if (!friends) {
      log::warn("friend lookup failed for seed " + s.user_id + "; skipped");
      continue;
    }
    for (const auto& fid : *friends) {
      if (!seed_ids.count(fid)) candidate_ids.insert(fid);
    }
  }

  std::vector<UserRecord> out;
  out.reserve(candidate_ids.size());
  for (const auto& id : candidate_ids) {
    auto profile = profile_lookup(id);
    if (!profile) {
      log::warn("profile lookup failed for " + id + "; skipped");
      continue;
    }
    out.push_back(std::move(*profile));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Entity linking and enrichment
// ---------------------------------------------------------------------------

// Annotates name + " " + description (the description only supplies
// disambiguation context) and keeps an entity only when its surface form
// lies entirely inside the name portion.
inline std::optional<std::string> link_entity(const std::string& name,
                                              const std::string& description,
                                              const AnnotationClient& client,
                                              double confidence = kDefaultLinkConfidence) {
  if (!(confidence > 0.0) || confidence > 1.0)
    throw std::invalid_argument("link_entity: confidence must be in (0,1]");
  if (name.empty()) return std::nullopt;

  std::vector<Annotation> annotations;
  try {
    annotations = client.annotate(name + " " + description, confidence);
  } catch (const std::exception& e) {
    log::warn(std::string("annotation client failed: ") + e.what());
    return std::nullopt;
  }

  for (const auto& a : annotations) {
    if (a.offset + a.surface_form.size() <= name.size()) return a.entity_uri;
  }
  return std::nullopt;
}

// Whole years elapsed between birth and reference, adjusted for whether the
// birthday has occurred yet. Negative when birth is after reference.
inline int age_at(const Date& birth, const Date& reference) {
  int years = int(reference.year()) - int(birth.year());
  const auto before_birthday =
      unsigned(reference.month()) < unsigned(birth.month()) ||
      (unsigned(reference.month()) == unsigned(birth.month()) &&
       unsigned(reference.day()) < unsigned(birth.day()));
  if (before_birthday) --years;
  return years;
}

// Turns expansion candidates into popular users: linked candidates gain KB
// types and, when the fixture knows a birth date, an age at reference_date.
// Unlinked candidates come back with empty kb_types.
inline std::vector<PopularUser> enrich_popular(
    const std::vector<UserRecord>& candidates, const KbFixture& fixture,
    const AnnotationClient& client, const Date& reference_date,
    double confidence = kDefaultLinkConfidence) {
  std::vector<PopularUser> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    PopularUser p;
    p.user_id = c.user_id;
    p.screen_name = c.screen_name;
    p.followers_count = c.followers_count;
    if (auto uri = link_entity(c.name, c.description, client, confidence)) {
      p.kb_entity_uri = *uri;
      const auto it = fixture.entities.find(*uri);
      if (it != fixture.entities.end()) {
        p.kb_types = it->second.types;
        if (it->second.birth_date) {
          const int age = age_at(*it->second.birth_date, reference_date);
          if (age < 0) {
            log::warn("birth date after reference date for " + *uri + "; ignored");
          } else {
            p.birth_date = it->second.birth_date;
            p.age_years = age;
          }
        }
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

inline json user_to_json(const UserRecord& u) {
  json j;
  j["user_id"] = u.user_id;
  j["screen_name"] = u.screen_name;
  j["name"] = u.name;
  j["description"] = u.description;
  j["followers_count"] = u.followers_count;
  j["friends_count"] = u.friends_count;
  j["friend_ids"] = u.friend_ids;
  if (u.extracted_age)
    j["extracted_age"] = *u.extracted_age;
  else
    j["extracted_age"] = nullptr;
  return j;
}

inline UserRecord user_from_json(const json& j) {
  UserRecord u;
  u.user_id = j.at("user_id").get<std::string>();
  u.screen_name = j.at("screen_name").get<std::string>();
  u.name = j.at("name").get<std::string>();
  u.description = j.at("description").get<std::string>();
  u.followers_count = j.at("followers_count").get<std::int64_t>();
  u.friends_count = j.at("friends_count").get<std::int64_t>();
  u.friend_ids = j.at("friend_ids").get<std::vector<std::string>>();
  if (j.contains("extracted_age") && !j.at("extracted_age").is_null())
    u.extracted_age = j.at("extracted_age").get<int>();
  return u;
}

struct UsersFile {
  std::vector<UserRecord> records;
  std::size_t skipped = 0;  // records dropped for invariant violations
};

// Newline-delimited JSON, one UserRecord per line. Parse failures are fatal
// with a line number; invariant violations skip the record and count it.
inline UsersFile load_users(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  UsersFile out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    UserRecord rec;
    try {
      rec = user_from_json(json::parse(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": parse error: " + e.what());
    }
    const auto violations = rec.invariant_violations();
    if (!violations.empty()) {
      ++out.skipped;
      log::warn(path + ":" + std::to_string(line_no) + ": record skipped: " +
                violations.front());
      continue;
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

inline void write_users_jsonl(const std::string& path,
                              const std::vector<UserRecord>& users) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& u : users) out << user_to_json(u).dump() << '\n';
}

// KbFixture file: JSON object mapping entity URI to {"types": [...],
// "birth_date": "YYYY-MM-DD" | null}. A malformed birth date is logged and
// treated as absent rather than failing the load.
inline KbFixture load_kb_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": parse error: " + e.what());
  }
  KbFixture fixture;
  for (const auto& [uri, entry] : j.items()) {
    KbEntry kb;
    for (const auto& t : entry.at("types")) kb.types.insert(t.get<std::string>());
    if (entry.contains("birth_date") && !entry.at("birth_date").is_null()) {
      const auto text = entry.at("birth_date").get<std::string>();
      kb.birth_date = parse_date(text);
      if (!kb.birth_date)
        log::warn(path + ": malformed birth_date '" + text + "' for " + uri);
    }
    fixture.entities.emplace(uri, std::move(kb));
  }
  return fixture;
}

inline void write_kb_fixture(const std::string& path, const KbFixture& fixture) {
  json j = json::object();
  for (const auto& [uri, entry] : fixture.entities) {
    json e;
    e["types"] = entry.types;
    if (entry.birth_date)
      e["birth_date"] = format_date(*entry.birth_date);
    else
      e["birth_date"] = nullptr;
    j[uri] = std::move(e);
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

// Annotation fixture file: JSON object mapping surface form to
// {"uri": ..., "confidence": ...}.
inline FixtureAnnotationClient load_annotation_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": parse error: " + e.what());
  }
  FixtureAnnotationClient client;
  for (const auto& [surface, entry] : j.items()) {
    client.add(surface, entry.at("uri").get<std::string>(),
               entry.value("confidence", 1.0));
  }
  return client;
}

}  // namespace agepred::ingest
