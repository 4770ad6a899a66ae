#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "icast/corpus.hpp"

namespace icast {

using nlohmann::json;

namespace {

const char* speaker_name(Speaker s) { return s == Speaker::User ? "user" : "agent"; }

Speaker parse_speaker(const std::string& s, long line) {
  if (s == "user") return Speaker::User;
  if (s == "agent") return Speaker::Agent;
  throw ParseError("unknown speaker '" + s + "'", line);
}

json sample_to_json(const CandidateGroup& g, const DialogueSample& s,
                    const std::vector<std::string>& taxonomy,
                    const char* partition) {
  json ctx = json::array();
  for (const auto& u : s.context)
    ctx.push_back({{"speaker", speaker_name(u.speaker)}, {"text", u.text}});
  json intents;
  if (s.intents) {
    intents = json::array();
    for (const auto& ann : *s.intents) {
      json labels = json::array();
      for (std::size_t l = 0; l < ann.bits.size(); ++l)
        if (ann.bits[l]) labels.push_back(taxonomy[l]);
      intents.push_back(labels);
    }
  }
  json j;
  j["group_id"] = g.group_id;
  j["context"] = ctx;
  j["candidate"] = s.candidate;
  j["intents"] = s.intents ? intents : json(nullptr);
  j["answer_label"] = s.answer_label ? json(*s.answer_label) : json(nullptr);
  j["partition"] = partition;
  return j;
}

void write_partition(std::ostream& os, const std::vector<CandidateGroup>& groups,
                     const std::vector<std::string>& taxonomy, const char* name) {
  for (const auto& g : groups)
    for (const auto& s : g.samples)
      os << sample_to_json(g, s, taxonomy, name).dump() << '\n';
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  json header;
  header["taxonomy"] = corpus.taxonomy;
  os << header.dump() << '\n';
  write_partition(os, corpus.labeled, corpus.taxonomy, "labeled");
  write_partition(os, corpus.unlabeled, corpus.taxonomy, "unlabeled");
  write_partition(os, corpus.validation, corpus.taxonomy, "validation");
  write_partition(os, corpus.test, corpus.taxonomy, "test");
  os.flush();
  if (!os) throw IoError("write failed: " + path);
}

Corpus load_corpus(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);

  std::string line;
  long line_no = 0;
  if (!std::getline(is, line)) throw ParseError("missing header line", 1);
  ++line_no;

  Corpus corpus;
  json header;
  try {
    header = json::parse(line);
    corpus.taxonomy = header.at("taxonomy").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad header: ") + e.what(), line_no);
  }
  std::unordered_map<std::string, std::size_t> label_index;
  for (std::size_t i = 0; i < corpus.taxonomy.size(); ++i)
    label_index[corpus.taxonomy[i]] = i;

  // partition -> group_id -> position in that partition's group vector
  std::unordered_map<std::string, std::unordered_map<std::int64_t, std::size_t>> group_pos;

  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad record: ") + e.what(), line_no);
    }
    try {
      DialogueSample s;
      for (const auto& u : j.at("context")) {
        Utterance utt;
        utt.speaker = parse_speaker(u.at("speaker").get<std::string>(), line_no);
        utt.text = u.at("text").get<std::string>();
        s.context.push_back(std::move(utt));
      }
      s.candidate = j.at("candidate").get<std::string>();
      if (!j.at("intents").is_null()) {
        std::vector<IntentAnnotation> anns;
        for (const auto& labels : j.at("intents")) {
          IntentAnnotation ann;
          ann.bits.assign(corpus.taxonomy.size(), 0);
          for (const auto& name : labels) {
            auto it = label_index.find(name.get<std::string>());
            if (it == label_index.end())
              throw ParseError("unknown intent label '" + name.get<std::string>() + "'",
                               line_no);
            ann.bits[it->second] = 1;
          }
          anns.push_back(std::move(ann));
        }
        s.intents = std::move(anns);
      }
      if (!j.at("answer_label").is_null()) s.answer_label = j.at("answer_label").get<int>();

      const std::string partition = j.at("partition").get<std::string>();
      std::vector<CandidateGroup>* groups = nullptr;
      if (partition == "labeled") groups = &corpus.labeled;
      else if (partition == "unlabeled") groups = &corpus.unlabeled;
      else if (partition == "validation") groups = &corpus.validation;
      else if (partition == "test") groups = &corpus.test;
      else throw ParseError("unknown partition '" + partition + "'", line_no);

      const std::int64_t gid = j.at("group_id").get<std::int64_t>();
      auto& pos_map = group_pos[partition];
      auto it = pos_map.find(gid);
      if (it == pos_map.end()) {
        pos_map[gid] = groups->size();
        CandidateGroup g;
        g.group_id = gid;
        groups->push_back(std::move(g));
        it = pos_map.find(gid);
      }
      CandidateGroup& g = (*groups)[it->second];
      if (s.answer_label && *s.answer_label == 1) g.positive_index = g.samples.size();
      g.samples.push_back(std::move(s));
    } catch (const ParseError&) {
      throw;
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad record: ") + e.what(), line_no);
    }
  }
  return corpus;
}

}  // namespace icast
