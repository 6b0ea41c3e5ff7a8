#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace qmann {

/// One question with its sentence window: the sentences preceding the
/// question (most recent last), the question tokens, the single answer
/// token and, when the source provides them, the indices into
/// `sentences` of the supporting facts.
struct Story {
  std::vector<std::vector<std::string>> sentences;
  std::vector<std::string> question;
  std::string answer;
  std::vector<std::size_t> supporting;

  bool operator==(const Story&) const = default;
};

/// Token <-> index bijection; size() is the model's input dimension.
class Vocabulary {
 public:
  /// Returns the index, inserting the token if new.
  std::size_t add(const std::string& token);
  /// Throws std::out_of_range for unknown tokens.
  std::size_t index(const std::string& token) const;
  bool contains(const std::string& token) const { return map_.count(token); }
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::map<std::string, std::size_t> map_;
  std::vector<std::string> tokens_;
};

struct Dataset {
  std::vector<Story> train;
  std::vector<Story> validation;
  std::vector<Story> test;
  Vocabulary vocab;
};

/// Parses bAbI-format text: lines "<id> <sentence>" or
/// "<id> <question>\t<answer>\t<supports>", with an id restart opening a
/// new context. Each question yields one Story holding the (at most
/// `max_sentences`) most recent sentences of its context. Malformed
/// lines are reported with their line number; an empty stream is an
/// error.
std::vector<Story> parse_babi(std::istream& in,
                              std::size_t max_sentences = 50);
std::vector<Story> parse_babi_file(const std::string& path,
                                   std::size_t max_sentences = 50);

/// Writes stories back out in the same format (one context per story).
void write_babi(std::ostream& out, const std::vector<Story>& stories);

/// JSON-lines cache of a story list, one story per line.
std::string story_to_json(const Story& story);
Story story_from_json(const std::string& line);
void write_jsonl(std::ostream& out, const std::vector<Story>& stories);
std::vector<Story> read_jsonl(std::istream& in);

/// Builds the vocabulary from the given (training) stories: sentence,
/// question and answer tokens.
Vocabulary build_vocabulary(const std::vector<Story>& stories);

/// Binary bag-of-words vector of length vocab.size(): 1 where the token
/// occurs, multiplicity ignored. Unknown tokens throw.
std::vector<double> encode_bow(const std::vector<std::string>& tokens,
                               const Vocabulary& vocab);

enum class SyntheticTask { SingleFact, TwoFact, WideSimilarity };

struct SyntheticSpec {
  SyntheticTask task = SyntheticTask::SingleFact;
  std::size_t n_train = 500;
  std::size_t n_test = 200;
  std::uint64_t seed = 0;
  // WideSimilarity knobs: longer stories with many confusable facts push
  // the trained dot similarities out of the 8-bit range.
  std::size_t story_len = 0;  // 0 = task default
  std::size_t n_entities = 0;
};

SyntheticTask parse_synthetic_task(const std::string& name);

/// Deterministic synthetic QnA tasks in bAbI shape. Vocabulary size
/// always lands in the 17..98 band the real tasks occupy.
Dataset gen_synthetic(const SyntheticSpec& spec);

/// Locates a bAbI task file like "qa8_*_{train,test}.txt" under dir (or
/// dir/en, dir/en-10k). Returns nothing when absent.
std::optional<std::string> find_babi_task_file(const std::string& dir,
                                               int task, bool train);

/// Loads a bAbI task: train/test files, validation carved from the
/// training stories.
Dataset load_babi_task(const std::string& dir, int task,
                       double validation_fraction, std::uint64_t seed,
                       std::size_t max_sentences = 50);

/// Splits off a validation set (deterministic shuffle by seed).
void split_validation(Dataset& data, double fraction, std::uint64_t seed);

/// Throws if any validation/test story uses a token missing from the
/// vocabulary.
void check_coverage(const Dataset& data);

}  // namespace qmann
