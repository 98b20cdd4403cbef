#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "unloc/config.hpp"
#include "unloc/encoders.hpp"
#include "unloc/geometry.hpp"
#include "unloc/random.hpp"

namespace unloc {

/// An untrimmed video: raw per-frame features plus ground truth in source
/// frame indices. A segment [a, b] covers frames a..b inclusive. For moment
/// retrieval, segment i answers captions[i]; otherwise class_id indexes the
/// dataset's class list.
struct VideoRecord {
  std::string id;
  ag::Matrix frames;  // n_frames x raw_dim
  double fps = 2.0;
  std::vector<Segment> segments;
  std::vector<std::string> captions;

  int length() const { return static_cast<int>(frames.rows()); }
};

struct Dataset {
  TaskKind task = TaskKind::ActionLocalization;
  std::vector<std::string> classes;
  std::vector<VideoRecord> videos;
  int raw_dim = 0;
};

struct SyntheticSpec {
  TaskKind task = TaskKind::ActionLocalization;
  int n_videos = 200;
  int n_classes = 3;
  int min_frames = 128;
  int max_frames = 192;
  int min_events = 1;
  int max_events = 4;
  // Inclusive event lengths (frames); one bucket is drawn uniformly per event.
  std::vector<std::pair<int, int>> event_lengths = {{4, 6}, {8, 14}, {18, 30}, {36, 56}};
  int feature_dim = 16;
  double noise_std = 0.3;
  // When in (0, 1), every video gets exactly round(fraction * length)
  // background frames and event lengths are derived from it instead.
  double background_fraction = -1.0;
  // Moment retrieval: filler words added around each caption's concept words.
  int filler_words = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Orthogonal class signatures of norm sqrt(dim); row 0 is background.
ag::Matrix class_signatures(int n_classes, int dim, Rng& rng);

/// Deterministic under `spec.seed`. Throws GenerationError when events
/// cannot be packed into a video.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Trimmed clips: each video is a single event of one class spanning every
/// frame. Signatures match generate_synthetic for the same seed and sizes.
Dataset generate_clips(const SyntheticSpec& spec);

/// A model-ready view of one video (or one window of it).
struct TaskSample {
  std::string video_id;
  TaskKind task = TaskKind::ActionLocalization;
  FeatureArray frames;              // n x raw_dim, padded rows masked out
  std::vector<std::string> texts;   // class names, or captions for MR
  std::vector<Segment> gts;         // sampled-index units; class_id indexes texts
  std::vector<int> query_ids;       // texts[i] is class / caption query_ids[i]
  // Source frame index of sampled row j is index_offset + j * index_step.
  double index_offset = 0.0;
  double index_step = 1.0;
  double fps = 2.0;
  int source_frames = 0;

  int valid_frames() const;
  /// Maps a segment from sampled to source frame units.
  Segment to_source(const Segment& s) const;
  double seconds_per_frame() const { return index_step / fps; }
};

/// evenly_spaced: rows round(j * (len - 1) / (n - 1)); segments are mapped
/// continuously, so a sampled row lies inside a mapped segment iff its
/// source position lies inside the original.
/// consecutive_padded: a seeded window of n consecutive frames, right-padded;
/// segments shifted and clipped to the valid rows.
TaskSample sample_frames(const VideoRecord& video, const Dataset& dataset,
                         const SamplingConfig& sampling, Rng& rng);

/// Consecutive non-overlapping n-frame windows covering the whole video.
std::vector<TaskSample> sliding_windows(const VideoRecord& video, const Dataset& dataset,
                                        int n);

/// The first `n_first` videos and the rest, sharing classes and signatures.
std::pair<Dataset, Dataset> split_videos(const Dataset& dataset, std::size_t n_first);

/// Splits the class vocabulary in two with a seeded permutation and returns
/// (seen, unseen) datasets restricted to each half's segments.
std::pair<Dataset, Dataset> zero_shot_split(const Dataset& dataset, std::uint64_t seed);

/// Label prompt templates, each with exactly one "{label}" slot.
class PromptSet {
 public:
  explicit PromptSet(std::vector<std::string> templates);

  /// The 28 Kinetics-style templates, starting with
  /// "a video of a person doing {label}".
  static PromptSet kinetics();

  std::string render(std::size_t index, const std::string& label) const;
  std::size_t size() const { return templates_.size(); }
  const std::vector<std::string>& templates() const { return templates_; }

 private:
  std::vector<std::string> templates_;
};

/// Tokens of template 0 applied to `label`. With `ensemble`, the summary row
/// is replaced by the average of every template's summary embedding, scaled
/// back to their mean norm.
TextTokens apply_prompts(const std::string& label, const PromptSet& prompts,
                         const TextEncoder& encoder, const Vocabulary& vocab,
                         int max_tokens, bool ensemble);

/// JSON annotation file contents (times in seconds).
struct AnnotatedSegment {
  double start_sec = 0.0;
  double end_sec = 0.0;
  int label = -1;          // TAL / AS
  std::string caption;     // MR
};

struct AnnotatedVideo {
  std::string id;
  double duration_sec = 0.0;
  double fps = 2.0;
  std::vector<AnnotatedSegment> segments;
};

struct AnnotationFile {
  TaskKind task = TaskKind::ActionLocalization;
  std::vector<std::string> classes;
  std::vector<AnnotatedVideo> videos;  // sorted by id
};

/// Throws SchemaError naming the field and video index on violations.
AnnotationFile parse_annotations(const std::string& json_text);
AnnotationFile read_annotations(const std::filesystem::path& path);
std::string annotations_to_json(const AnnotationFile& file);

/// Annotations plus per-video features from <dir>/features/<id>.ulft.
Dataset load_dataset(const std::filesystem::path& annotation_path);
/// Writes annotations.json and features/<id>.ulft under `dir`.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

AnnotationFile to_annotations(const Dataset& dataset);

/// Vocabulary covering class names, captions and the prompt templates.
Vocabulary build_vocabulary(const Dataset& dataset, const PromptSet& prompts);

}  // namespace unloc
