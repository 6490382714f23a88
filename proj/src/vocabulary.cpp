#include "ibow/vocabulary.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ibow {

void VocabParams::validate() const {
  forest.validate();
  if (purge_frames < 1) throw std::invalid_argument("P_f must be >= 1");
  if (min_observations < 1) throw std::invalid_argument("P_o must be >= 1");
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("ratio must lie in (0, 1)");
}

Vocabulary::Vocabulary(const FeatureList& first_image, VocabParams params, ImageId image, FrameIndex frame)
    : params_(params), forest_(params.forest, params.seed) {
  params_.validate();
  if (first_image.empty()) throw std::invalid_argument("cannot initialise a vocabulary from an empty image");
  bits_ = first_image.front().descriptor.width();

  DescriptorMap initial;
  std::vector<WordId> ids;
  ids.reserve(first_image.size());
  for (const auto& f : first_image) {
    if (f.descriptor.width() != bits_) throw std::invalid_argument("mixed descriptor widths in first image");
    const WordId id = next_id_++;
    initial.emplace(id, f.descriptor);
    words_.emplace(id, VisualWord{id, WordStatus::stable, frame, 0, 0});
    ids.push_back(id);
  }
  forest_.build(std::move(initial));
  index_occurrences(image, ids);
}

const VisualWord& Vocabulary::word(WordId id) const {
  const auto it = words_.find(id);
  if (it == words_.end()) throw std::invalid_argument("unknown word id " + std::to_string(id));
  return it->second;
}

const std::vector<Posting>& Vocabulary::postings(WordId id) const {
  static const std::vector<Posting> none;
  const auto it = index_.find(id);
  return it == index_.end() ? none : it->second;
}

std::size_t Vocabulary::image_total(ImageId image) const {
  const auto it = image_totals_.find(image);
  return it == image_totals_.end() ? 0 : it->second;
}


WordAssignment Vocabulary::assign_words(std::span<const Feature> features) const {
  WordAssignment out;
  const std::size_t single_radius = bits_ / 4;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto nn = forest_.knn_search(features[i].descriptor, 2);
    bool accept = false;
    if (nn.size() >= 2)
      accept = static_cast<double>(nn[0].distance) < params_.ratio * static_cast<double>(nn[1].distance);
    else if (nn.size() == 1)
      accept = nn[0].distance <= single_radius;
    if (accept) out.matches.emplace_back(i, nn[0].word);
    else out.unmatched.push_back(i);
  }
  return out;
}

const BinaryDescriptor& Vocabulary::merge_word(WordId id, const BinaryDescriptor& q) {
  auto it = words_.find(id);
  if (it == words_.end()) throw std::invalid_argument("merge into unknown word " + std::to_string(id));
  forest_.update_descriptor(id, forest_.descriptor(id) & q);
  ++it->second.times_matched;
  return forest_.descriptor(id);
}

WordId Vocabulary::insert_word(const BinaryDescriptor& d, WordStatus status, FrameIndex frame) {
  if (d.width() != bits_) throw std::invalid_argument("descriptor width mismatch");
  const WordId id = next_id_++;
  forest_.insert(id, d);
  words_.emplace(id, VisualWord{id, status, frame, 0, 0});
  if (status == WordStatus::temporary) {
    temporaries_.push_back(id);
    ++temp_count_;
  }
  return id;
}

std::vector<WordId> Vocabulary::add_temporary_words(std::span<const Feature> features,
                                                    std::span<const std::size_t> unmatched, ImageId image,
                                                    FrameIndex frame) {
  std::vector<WordId> ids;
  ids.reserve(unmatched.size());
  for (const auto idx : unmatched) ids.push_back(insert_word(features[idx].descriptor, WordStatus::temporary, frame));
  if (!ids.empty()) index_occurrences(image, ids);
  return ids;
}

void Vocabulary::delete_word(WordId id) {
  forest_.remove(id);
  words_.erase(id);
  index_.erase(id);
}

std::vector<WordId> Vocabulary::purge_temporaries(FrameIndex frame) {
  std::vector<WordId> deleted;
  if (!params_.purge_enabled) return deleted;
  while (!temporaries_.empty()) {
    const WordId id = temporaries_.front();
    auto it = words_.find(id);
    if (it == words_.end() || it->second.status != WordStatus::temporary) {
      temporaries_.pop_front();
      continue;
    }
    if (frame < it->second.created_at || frame - it->second.created_at < params_.purge_frames) break;
    temporaries_.pop_front();
    --temp_count_;
    if (it->second.times_matched >= params_.min_observations) {
      it->second.status = WordStatus::stable;
    } else {
      delete_word(id);
      deleted.push_back(id);
    }
  }
  return deleted;
}

void Vocabulary::index_occurrences(ImageId image, std::span<const WordId> ids) {
  // Aggregate counts per word, keeping first-occurrence order.
  std::vector<std::pair<WordId, std::uint32_t>> counts;
  std::unordered_map<WordId, std::size_t> slot;
  for (const auto id : ids) {
    if (!words_.contains(id)) continue;
    auto [it, fresh] = slot.try_emplace(id, counts.size());
    if (fresh) counts.emplace_back(id, 0);
    ++counts[it->second].second;
  }
  image_totals_[image] += ids.size();
  for (const auto& [id, c] : counts) {
    auto& list = index_[id];
    if (!list.empty() && list.back().image == image) {
      list.back().count += c;
    } else {
      list.push_back({image, c});
      words_.at(id).doc_frequency = list.size();
    }
  }
}

std::vector<ScoredImage> Vocabulary::score_images(std::span<const Feature> features,
                                                  const ImageFilter& exclude) const {
  return score_assignment(assign_words(features), exclude);
}

std::vector<ScoredImage> Vocabulary::score_assignment(const WordAssignment& assignment,
                                                      const ImageFilter& exclude) const {
  const double n_images = static_cast<double>(image_count());
  std::unordered_map<ImageId, double> acc;
  for (const auto& [feature, id] : assignment.matches) {
    const auto it = index_.find(id);
    if (it == index_.end() || it->second.empty()) continue;
    const auto& list = it->second;
    const double idf = std::log(n_images / static_cast<double>(list.size()));
    if (idf <= 0.0) continue;
    for (const auto& p : list) {
      if (exclude && exclude(p.image)) continue;
      acc[p.image] += static_cast<double>(p.count) / static_cast<double>(image_totals_.at(p.image)) * idf;
    }
  }
  std::vector<ScoredImage> out;
  out.reserve(acc.size());
  for (const auto& [image, score] : acc)
    if (score > 0.0) out.push_back({image, score});
  std::sort(out.begin(), out.end(), [](const ScoredImage& a, const ScoredImage& b) {
    return a.score != b.score ? a.score > b.score : a.image < b.image;
  });
  return out;
}

ImageUpdate Vocabulary::process_image(std::span<const Feature> features, ImageId image, FrameIndex frame,
                                      const ImageFilter& exclude) {
  ImageUpdate up;
  up.assignment = assign_words(features);
  up.scores = score_assignment(up.assignment, exclude);

  for (const auto& [feature, id] : up.assignment.matches) merge_word(id, features[feature].descriptor);
  up.added = add_temporary_words(features, up.assignment.unmatched, image, frame);
  up.deleted = purge_temporaries(frame);

  std::vector<WordId> matched;
  matched.reserve(up.assignment.matches.size());
  for (const auto& [feature, id] : up.assignment.matches) matched.push_back(id);
  if (!matched.empty()) {
    // Purged words are skipped, but they still count toward the image's feature total.
    index_occurrences(image, matched);
  } else if (!image_totals_.contains(image)) {
    image_totals_[image] = 0;
  }

  up.stats = {frame, size(), temporary_count(), matched.size(), up.added.size(), up.deleted.size()};
  return up;
}

std::string diagnostics_csv_header() { return "frame,vocab_size,temp_count,merged,added,deleted"; }

std::string to_csv_row(const FrameStats& s) {
  std::ostringstream out;
  out << s.frame << ',' << s.vocab_size << ',' << s.temp_count << ',' << s.merged << ',' << s.added << ','
      << s.deleted;
  return out.str();
}

}  // namespace ibow
