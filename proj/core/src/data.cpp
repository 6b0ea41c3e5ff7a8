#include "qmann/data.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "qmann/rng.hpp"

namespace qmann {

std::size_t Vocabulary::add(const std::string& token) {
  const auto it = map_.find(token);
  if (it != map_.end()) return it->second;
  const std::size_t idx = tokens_.size();
  map_.emplace(token, idx);
  tokens_.push_back(token);
  return idx;
}

std::size_t Vocabulary::index(const std::string& token) const {
  const auto it = map_.find(token);
  if (it == map_.end()) {
    throw std::out_of_range("unknown token: \"" + token + "\"");
  }
  return it->second;
}

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Lowercases and splits on whitespace, shedding trailing ./?/! and
// commas used as list separators stay inside the token (bAbI multi-item
// answers are one token).
std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) {
    while (!tok.empty() &&
           (tok.back() == '.' || tok.back() == '?' || tok.back() == '!')) {
      tok.pop_back();
    }
    if (!tok.empty()) out.push_back(lower(tok));
  }
  return out;
}

[[noreturn]] void malformed(std::size_t line_no, const std::string& why) {
  throw std::runtime_error("malformed bAbI line " + std::to_string(line_no) +
                           ": " + why);
}

}  // namespace

std::vector<Story> parse_babi(std::istream& in, std::size_t max_sentences) {
  std::vector<Story> stories;
  // Current context: sentences with their original line ids.
  std::vector<std::pair<long, std::vector<std::string>>> context;
  long last_id = -1;
  std::string line;
  std::size_t line_no = 0;
  bool saw_any = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    saw_any = true;
    std::size_t pos = 0;
    while (pos < line.size() && std::isdigit(static_cast<unsigned char>(line[pos]))) ++pos;
    if (pos == 0) malformed(line_no, "expected a numeric id");
    if (pos >= line.size() || line[pos] != ' ') {
      malformed(line_no, "expected a space after the id");
    }
    const long id = std::stol(line.substr(0, pos));
    const std::string rest = line.substr(pos + 1);
    if (rest.empty()) malformed(line_no, "empty sentence");
    if (id <= last_id) context.clear();  // id restart opens a new context
    last_id = id;

    const auto tab = rest.find('\t');
    if (tab == std::string::npos) {
      context.emplace_back(id, tokenize(rest));
      continue;
    }
    // Question line: question \t answer [\t supports]
    const std::string q_text = rest.substr(0, tab);
    const auto tab2 = rest.find('\t', tab + 1);
    const std::string a_text = tab2 == std::string::npos
                                   ? rest.substr(tab + 1)
                                   : rest.substr(tab + 1, tab2 - tab - 1);
    const std::string s_text =
        tab2 == std::string::npos ? std::string() : rest.substr(tab2 + 1);
    if (a_text.empty()) malformed(line_no, "question without an answer");

    Story story;
    story.question = tokenize(q_text);
    if (story.question.empty()) malformed(line_no, "empty question");
    story.answer = lower(a_text);

    const std::size_t start =
        context.size() > max_sentences ? context.size() - max_sentences : 0;
    for (std::size_t i = start; i < context.size(); ++i) {
      story.sentences.push_back(context[i].second);
    }
    std::istringstream sup(s_text);
    long sup_id = 0;
    while (sup >> sup_id) {
      for (std::size_t i = start; i < context.size(); ++i) {
        if (context[i].first == sup_id) {
          story.supporting.push_back(i - start);
          break;
        }
      }
      // Supports pointing at sentences evicted by the window are
      // dropped; they cannot be represented in the story.
    }
    if (story.sentences.empty()) {
      malformed(line_no, "question before any sentence");
    }
    stories.push_back(std::move(story));
  }
  if (!saw_any) throw std::runtime_error("empty bAbI input");
  return stories;
}

std::vector<Story> parse_babi_file(const std::string& path,
                                   std::size_t max_sentences) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_babi(in, max_sentences);
}

namespace {

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace

void write_babi(std::ostream& out, const std::vector<Story>& stories) {
  for (const auto& story : stories) {
    long id = 1;
    for (const auto& sent : story.sentences) {
      out << id++ << ' ' << join(sent) << " .\n";
    }
    out << id << ' ' << join(story.question) << " ?\t" << story.answer << '\t';
    for (std::size_t i = 0; i < story.supporting.size(); ++i) {
      if (i) out << ' ';
      out << story.supporting[i] + 1;  // back to 1-based line ids
    }
    out << '\n';
  }
}

std::string story_to_json(const Story& story) {
  nlohmann::json j;
  j["sentences"] = story.sentences;
  j["question"] = story.question;
  j["answer"] = story.answer;
  j["supporting"] = story.supporting;
  return j.dump();
}

Story story_from_json(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  Story s;
  s.sentences = j.at("sentences").get<std::vector<std::vector<std::string>>>();
  s.question = j.at("question").get<std::vector<std::string>>();
  s.answer = j.at("answer").get<std::string>();
  s.supporting = j.at("supporting").get<std::vector<std::size_t>>();
  return s;
}

void write_jsonl(std::ostream& out, const std::vector<Story>& stories) {
  for (const auto& s : stories) out << story_to_json(s) << '\n';
}

std::vector<Story> read_jsonl(std::istream& in) {
  std::vector<Story> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(story_from_json(line));
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<Story>& stories) {
  Vocabulary vocab;
  for (const auto& story : stories) {
    for (const auto& sent : story.sentences) {
      for (const auto& tok : sent) vocab.add(tok);
    }
    for (const auto& tok : story.question) vocab.add(tok);
    vocab.add(story.answer);
  }
  return vocab;
}

std::vector<double> encode_bow(const std::vector<std::string>& tokens,
                               const Vocabulary& vocab) {
  std::vector<double> v(vocab.size(), 0.0);
  for (const auto& tok : tokens) v[vocab.index(tok)] = 1.0;
  return v;
}

SyntheticTask parse_synthetic_task(const std::string& name) {
  if (name == "single-fact") return SyntheticTask::SingleFact;
  if (name == "two-fact") return SyntheticTask::TwoFact;
  if (name == "wide-similarity") return SyntheticTask::WideSimilarity;
  throw std::invalid_argument("unknown synthetic task \"" + name +
                              "\" (single-fact|two-fact|wide-similarity)");
}

namespace {

std::vector<std::string> numbered(const std::string& stem, std::size_t n,
                                  const std::vector<std::string>& base) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < base.size()) {
      out.push_back(base[i]);
    } else {
      out.push_back(stem + std::to_string(i));
    }
  }
  return out;
}

const std::vector<std::string> kNames = {
    "mary", "john",  "sandra", "daniel", "emily", "frank",
    "greg", "helen", "ivan",   "julia",  "kevin", "laura"};
const std::vector<std::string> kPlaces = {
    "kitchen", "garden",  "office",  "bathroom", "bedroom",
    "hallway", "cellar",  "balcony", "garage",   "attic"};
const std::vector<std::string> kThings = {"football", "apple",  "milk",
                                          "suitcase", "letter", "ring"};

// Registers every token the task can emit, so the input dimension is a
// property of the task rather than of the sample.
void register_pools(const SyntheticSpec& spec, Vocabulary& vocab) {
  auto add_all = [&vocab](const std::vector<std::string>& pool) {
    for (const auto& tok : pool) vocab.add(tok);
  };
  switch (spec.task) {
    case SyntheticTask::SingleFact:
      add_all(numbered("person", 8, kNames));
      add_all(numbered("place", 6, kPlaces));
      add_all({"went", "to", "the", "where", "is"});
      break;
    case SyntheticTask::TwoFact:
      add_all(numbered("person", 6, kNames));
      add_all(numbered("place", 6, kPlaces));
      add_all(numbered("thing", 6, kThings));
      add_all({"took", "went", "to", "the", "where", "is"});
      break;
    case SyntheticTask::WideSimilarity: {
      const std::size_t len = spec.story_len ? spec.story_len : 14;
      std::size_t n_persons = spec.n_entities ? spec.n_entities : 20;
      n_persons = std::min<std::size_t>(std::max(n_persons, len), 80);
      add_all(numbered("person", n_persons, kNames));
      add_all(numbered("place", 10, kPlaces));
      add_all({"moved", "to", "the", "where", "is"});
      break;
    }
  }
}

std::vector<Story> gen_stories(const SyntheticSpec& spec, std::size_t count,
                               Rng& rng) {
  std::vector<Story> out;
  out.reserve(count);
  switch (spec.task) {
    case SyntheticTask::SingleFact: {
      const auto persons = numbered("person", 8, kNames);
      const auto places = numbered("place", 6, kPlaces);
      for (std::size_t s = 0; s < count; ++s) {
        Story st;
        const std::size_t len = 1 + rng.below(3);
        std::vector<std::size_t> who(persons.size());
        for (std::size_t i = 0; i < who.size(); ++i) who[i] = i;
        // distinct persons per story so each question has one fact
        for (std::size_t i = 0; i < len; ++i) {
          std::swap(who[i], who[i + rng.below(who.size() - i)]);
        }
        std::vector<std::size_t> where(len);
        for (std::size_t i = 0; i < len; ++i) {
          where[i] = rng.below(places.size());
          st.sentences.push_back(
              {persons[who[i]], "went", "to", "the", places[where[i]]});
        }
        const std::size_t pick = rng.below(len);
        st.question = {"where", "is", persons[who[pick]]};
        st.answer = places[where[pick]];
        st.supporting = {pick};
        out.push_back(std::move(st));
      }
      break;
    }
    case SyntheticTask::TwoFact: {
      const auto persons = numbered("person", 6, kNames);
      const auto places = numbered("place", 6, kPlaces);
      const auto things = numbered("thing", 6, kThings);
      for (std::size_t s = 0; s < count; ++s) {
        Story st;
        std::vector<std::size_t> who(persons.size());
        for (std::size_t i = 0; i < who.size(); ++i) who[i] = i;
        for (std::size_t i = 0; i < 2; ++i) {
          std::swap(who[i], who[i + rng.below(who.size() - i)]);
        }
        const std::size_t thing = rng.below(things.size());
        const std::size_t place = rng.below(places.size());
        const std::size_t other = rng.below(places.size());
        // carrier takes the object then moves; a second person is noise
        st.sentences.push_back({persons[who[0]], "took", "the", things[thing]});
        st.sentences.push_back(
            {persons[who[1]], "went", "to", "the", places[other]});
        st.sentences.push_back(
            {persons[who[0]], "went", "to", "the", places[place]});
        st.question = {"where", "is", "the", things[thing]};
        st.answer = places[place];
        st.supporting = {0, 2};
        out.push_back(std::move(st));
      }
      break;
    }
    case SyntheticTask::WideSimilarity: {
      // Many near-identical facts per story: every sentence shares the
      // filler tokens, so confident addressing needs large similarity
      // gaps and trained dot scores drift out of the 8-bit range.
      const std::size_t len = spec.story_len ? spec.story_len : 14;
      std::size_t n_persons = spec.n_entities ? spec.n_entities : 20;
      n_persons = std::min<std::size_t>(std::max(n_persons, len), 80);
      const auto persons = numbered("person", n_persons, kNames);
      const auto places = numbered("place", 10, kPlaces);
      for (std::size_t s = 0; s < count; ++s) {
        Story st;
        std::vector<std::size_t> who(persons.size());
        for (std::size_t i = 0; i < who.size(); ++i) who[i] = i;
        for (std::size_t i = 0; i < len; ++i) {
          std::swap(who[i], who[i + rng.below(who.size() - i)]);
        }
        std::vector<std::size_t> where(len);
        for (std::size_t i = 0; i < len; ++i) {
          where[i] = rng.below(places.size());
          st.sentences.push_back(
              {persons[who[i]], "moved", "to", "the", places[where[i]]});
        }
        const std::size_t pick = rng.below(len);
        st.question = {"where", "is", persons[who[pick]]};
        st.answer = places[where[pick]];
        st.supporting = {pick};
        out.push_back(std::move(st));
      }
      break;
    }
  }
  return out;
}

}  // namespace

Dataset gen_synthetic(const SyntheticSpec& spec) {
  Dataset data;
  Rng train_rng(spec.seed * 2654435761ULL + 1);
  Rng test_rng(spec.seed * 2654435761ULL + 2);
  data.train = gen_stories(spec, spec.n_train, train_rng);
  data.test = gen_stories(spec, spec.n_test, test_rng);
  register_pools(spec, data.vocab);
  if (data.vocab.size() < 17 || data.vocab.size() > 98) {
    throw std::logic_error("synthetic vocabulary size " +
                           std::to_string(data.vocab.size()) +
                           " outside the 17..98 band");
  }
  check_coverage(data);
  return data;
}

std::optional<std::string> find_babi_task_file(const std::string& dir,
                                               int task, bool train) {
  namespace fs = std::filesystem;
  const std::string prefix = "qa" + std::to_string(task) + "_";
  const std::string suffix = train ? "_train.txt" : "_test.txt";
  for (const auto& sub : {std::string(), std::string("en"),
                          std::string("en-10k")}) {
    const fs::path base = sub.empty() ? fs::path(dir) : fs::path(dir) / sub;
    std::error_code ec;
    if (!fs::is_directory(base, ec)) continue;
    for (const auto& entry : fs::directory_iterator(base, ec)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind(prefix, 0) == 0 && name.size() >= suffix.size() &&
          name.compare(name.size() - suffix.size(), suffix.size(), suffix) ==
              0) {
        return entry.path().string();
      }
    }
  }
  return std::nullopt;
}

Dataset load_babi_task(const std::string& dir, int task,
                       double validation_fraction, std::uint64_t seed,
                       std::size_t max_sentences) {
  const auto train_path = find_babi_task_file(dir, task, true);
  const auto test_path = find_babi_task_file(dir, task, false);
  if (!train_path || !test_path) {
    throw std::runtime_error("no bAbI task " + std::to_string(task) +
                             " files under " + dir);
  }
  Dataset data;
  data.train = parse_babi_file(*train_path, max_sentences);
  data.test = parse_babi_file(*test_path, max_sentences);
  data.vocab = build_vocabulary(data.train);
  split_validation(data, validation_fraction, seed);
  check_coverage(data);
  return data;
}

void split_validation(Dataset& data, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || data.train.empty()) return;
  Rng rng(seed ^ 0x5deece66dULL);
  std::vector<std::size_t> order(data.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  const std::size_t n_val =
      std::max<std::size_t>(1, static_cast<std::size_t>(
                                   fraction * static_cast<double>(order.size())));
  std::vector<Story> train, val;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_val ? val : train).push_back(std::move(data.train[order[i]]));
  }
  data.train = std::move(train);
  data.validation = std::move(val);
}

void check_coverage(const Dataset& data) {
  auto check = [&](const std::vector<Story>& stories, const char* split) {
    for (const auto& story : stories) {
      for (const auto& sent : story.sentences) {
        for (const auto& tok : sent) {
          if (!data.vocab.contains(tok)) {
            throw std::runtime_error(std::string(split) +
                                     " story uses unknown token \"" + tok +
                                     "\"");
          }
        }
      }
      for (const auto& tok : story.question) {
        if (!data.vocab.contains(tok)) {
          throw std::runtime_error(std::string(split) +
                                   " question uses unknown token \"" + tok +
                                   "\"");
        }
      }
      if (!data.vocab.contains(story.answer)) {
        throw std::runtime_error(std::string(split) +
                                 " answer is an unknown token \"" +
                                 story.answer + "\"");
      }
    }
  };
  check(data.validation, "validation");
  check(data.test, "test");
}

}  // namespace qmann
