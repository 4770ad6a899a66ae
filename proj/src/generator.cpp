#include <algorithm>
#include <string>
#include <vector>

#include "icast/bm25.hpp"
#include "icast/corpus.hpp"
#include "icast/encoder.hpp"
#include "icast/rng.hpp"

namespace icast {

namespace {

struct Dialogue {
  std::vector<Utterance> context;
  std::vector<IntentAnnotation> intents;
  std::string answer;
};

std::string vocab_word(std::size_t i) { return "w" + std::to_string(i); }

// Text tokens that signal an intent label without being reserved markers.
std::string intent_keyword(std::size_t label) {
  return "topic" + std::to_string(label) + "cue";
}

std::string answer_marker(std::size_t label) {
  return "ansmark" + std::to_string(label);
}

std::size_t next_intent(const GeneratorConfig& cfg, Rng& rng,
                        std::size_t prev, bool first) {
  if (first) return rng.next_index(cfg.taxonomy.size());
  if (!cfg.intent_transition_matrix.empty())
    return rng.next_weighted(cfg.intent_transition_matrix[prev]);
  // Sticky default chain: dialogues tend to stay on one intent.
  if (rng.next_bernoulli(cfg.intent_stickiness)) return prev;
  return rng.next_index(cfg.taxonomy.size());
}

Dialogue generate_dialogue(const GeneratorConfig& cfg, std::uint64_t dialogue_seed) {
  Rng rng(dialogue_seed);
  const std::size_t n_labels = cfg.taxonomy.size();

  // Per-dialogue topic vocabulary ties the correct answer to its context.
  std::vector<std::string> topic;
  for (int i = 0; i < 6; ++i) topic.push_back(vocab_word(rng.next_index(cfg.vocabulary_size)));

  const std::size_t turns =
      cfg.min_turns + rng.next_index(cfg.max_turns - cfg.min_turns + 1);

  Dialogue d;
  std::size_t intent = 0;
  for (std::size_t t = 0; t < turns; ++t) {
    intent = next_intent(cfg, rng, intent, t == 0);
    IntentAnnotation ann;
    ann.bits.assign(n_labels, 0);
    ann.bits[intent] = 1;
    d.intents.push_back(ann);

    std::vector<std::string> words;
    words.push_back(topic[rng.next_index(topic.size())]);
    words.push_back(vocab_word(rng.next_index(cfg.vocabulary_size)));
    // The cue sits last so it neighbors the separator in the final turn.
    if (rng.next_bernoulli(cfg.cue_probability))
      words.push_back(intent_keyword(intent));

    Utterance u;
    u.speaker = (t % 2 == 0) ? Speaker::User : Speaker::Agent;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) u.text += ' ';
      u.text += words[i];
    }
    d.context.push_back(std::move(u));
  }

  // Answer correctness couples to the final intent with the configured strength.
  const std::size_t marker_intent =
      rng.next_bernoulli(cfg.intent_signal_strength) ? intent : rng.next_index(n_labels);
  std::vector<std::string> ans;
  ans.push_back("replyto");  // answer-register token shared by every answer
  ans.push_back(answer_marker(marker_intent));
  ans.push_back(topic[rng.next_index(topic.size())]);
  ans.push_back(vocab_word(rng.next_index(cfg.vocabulary_size)));
  for (std::size_t i = 0; i < ans.size(); ++i) {
    if (i) d.answer += ' ';
    d.answer += ans[i];
  }
  return d;
}

}  // namespace

Corpus generate_synthetic_corpus(const GeneratorConfig& cfg) {
  cfg.validate();
  Corpus corpus;
  corpus.taxonomy = cfg.taxonomy;
  if (cfg.n_dialogues == 0) return corpus;

  std::vector<Dialogue> dialogues;
  dialogues.reserve(cfg.n_dialogues);
  for (std::size_t i = 0; i < cfg.n_dialogues; ++i)
    dialogues.push_back(generate_dialogue(cfg, mix_seed(cfg.seed, i)));

  // Negative candidates are drawn via BM25 from all texts of other
  // dialogues: their answers and their individual turns.
  std::vector<TokenList> pool;
  std::vector<std::size_t> pool_owner;   // dialogue index of each pool doc
  std::vector<const std::string*> pool_text;
  for (std::size_t i = 0; i < dialogues.size(); ++i) {
    const Dialogue& d = dialogues[i];
    pool.push_back(tokenize(d.answer));
    pool_owner.push_back(i);
    pool_text.push_back(&d.answer);
    for (const auto& u : d.context) {
      pool.push_back(tokenize(u.text));
      pool_owner.push_back(i);
      pool_text.push_back(&u.text);
    }
  }
  Bm25Index index(pool, {cfg.bm25_k1, cfg.bm25_b});

  // Partition assignment by shuffled dialogue index.
  std::vector<std::size_t> order(cfg.n_dialogues);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng part_rng(mix_seed(cfg.seed, 0x9a27));
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[part_rng.next_index(i)]);
  const std::size_t n_test = static_cast<std::size_t>(
      std::llround(cfg.test_fraction * static_cast<double>(cfg.n_dialogues)));
  const std::size_t n_val = static_cast<std::size_t>(
      std::llround(cfg.validation_fraction * static_cast<double>(cfg.n_dialogues)));
  std::vector<int> partition(cfg.n_dialogues, 0);  // 0 train, 1 val, 2 test
  for (std::size_t i = 0; i < n_test && i < order.size(); ++i) partition[order[i]] = 2;
  for (std::size_t i = n_test; i < n_test + n_val && i < order.size(); ++i)
    partition[order[i]] = 1;

  for (std::size_t i = 0; i < cfg.n_dialogues; ++i) {
    const Dialogue& d = dialogues[i];
    TokenList query;
    for (const auto& u : d.context) {
      auto toks = tokenize(u.text);
      query.insert(query.end(), toks.begin(), toks.end());
    }
    // Over-retrieve so skipping the group's own documents still leaves
    // enough negatives (a dialogue owns 1 answer + max_turns turns).
    auto retrieved =
        index.retrieve(query, cfg.negatives_per_group + cfg.max_turns + 1);
    std::vector<std::size_t> negatives;
    for (std::size_t doc : retrieved) {
      if (pool_owner[doc] == i) continue;  // never from the group's own dialogue
      negatives.push_back(doc);
      if (negatives.size() == cfg.negatives_per_group) break;
    }

    Rng group_rng(mix_seed(cfg.seed, 0x6e5u, i));
    const std::size_t pos_index = group_rng.next_index(negatives.size() + 1);

    CandidateGroup group;
    group.group_id = static_cast<std::int64_t>(i);
    group.positive_index = pos_index;
    std::size_t neg_cursor = 0;
    for (std::size_t slot = 0; slot < negatives.size() + 1; ++slot) {
      DialogueSample s;
      s.context = d.context;
      s.intents = d.intents;
      if (slot == pos_index) {
        s.candidate = d.answer;
        s.answer_label = 1;
      } else {
        s.candidate = *pool_text[negatives[neg_cursor++]];
        s.answer_label = 0;
      }
      group.samples.push_back(std::move(s));
    }

    switch (partition[i]) {
      case 1: corpus.validation.push_back(std::move(group)); break;
      case 2: corpus.test.push_back(std::move(group)); break;
      default: corpus.labeled.push_back(std::move(group)); break;
    }
  }
  return corpus;
}

}  // namespace icast
