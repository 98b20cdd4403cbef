#include "unloc/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "unloc/errors.hpp"

namespace unloc {

namespace {

const std::vector<std::string>& action_words() {
  static const std::vector<std::string> words = {
      "jumping",  "cooking",   "swimming", "climbing", "dancing",  "running",
      "painting", "juggling",  "rowing",   "skating",  "knitting", "surfing",
      "boxing",   "fencing",   "sewing",   "skiing",   "welding",  "drumming",
      "hiking",   "baking",    "sailing",  "diving",   "archery",  "bowling"};
  return words;
}

const std::vector<std::string>& adjectives() {
  static const std::vector<std::string> words = {"red",   "tall",  "quick", "small",
                                                 "green", "loud",  "old",   "bright"};
  return words;
}

const std::vector<std::string>& nouns() {
  static const std::vector<std::string> words = {"ball", "dog",  "car",  "door",
                                                 "boat", "lamp", "kite", "drum"};
  return words;
}

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> words = {
      "the", "someone", "then", "again", "near", "while", "person", "slowly",
      "here", "scene", "there", "after", "shows", "with", "camera", "moment"};
  return words;
}

std::vector<std::string> class_names(TaskKind task, int n) {
  std::vector<std::string> names;
  if (task == TaskKind::MomentRetrieval) {
    const int na = static_cast<int>(adjectives().size());
    const int nn = static_cast<int>(nouns().size());
    if (n > na * nn) throw ConfigError("too many synthetic concepts");
    for (int c = 0; c < n; ++c) {
      // Walk the diagonal first so that early concepts share no word.
      const int a = c % na;
      const int b = (c / na + c) % nn;
      names.push_back(adjectives()[static_cast<std::size_t>(a)] + " " +
                      nouns()[static_cast<std::size_t>(b)]);
    }
  } else {
    if (n > static_cast<int>(action_words().size())) {
      throw ConfigError("too many synthetic classes");
    }
    names.assign(action_words().begin(), action_words().begin() + n);
  }
  return names;
}

// Splits `total` into `parts` random integers, each >= `minimum`.
std::vector<int> random_partition(int total, int parts, int minimum, Rng& rng) {
  std::vector<int> out(static_cast<std::size_t>(parts), minimum);
  for (int k = 0; k < total - parts * minimum; ++k) {
    out[static_cast<std::size_t>(rng.uniform_int(0, parts - 1))] += 1;
  }
  return out;
}

std::string caption_for(const std::string& concept_words, int fillers, Rng& rng) {
  std::vector<std::string> words;
  for (int i = 0; i < fillers; ++i) {
    const auto& pool = filler_words();
    words.push_back(pool[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(pool.size()) - 1))]);
  }
  const auto pos = static_cast<std::size_t>(rng.uniform_int(0, fillers));
  words.insert(words.begin() + static_cast<std::ptrdiff_t>(pos), concept_words);
  std::string text;
  for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
  return text;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_videos < 1) throw ConfigError("n_videos must be >= 1");
  if (n_classes < 1) throw ConfigError("n_classes must be >= 1");
  if (min_frames < 1 || max_frames < min_frames) {
    throw ConfigError("frames_per_video range is empty");
  }
  if (min_events < 1 || max_events < min_events) {
    throw ConfigError("events_per_video range is empty");
  }
  if (feature_dim < n_classes + 1) {
    throw ConfigError("feature_dim must exceed n_classes to keep signatures orthogonal");
  }
  if (noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
  if (background_fraction >= 1.0) throw ConfigError("background_fraction must be < 1");
  const bool by_fraction = background_fraction > 0.0;
  if (!by_fraction) {
    if (event_lengths.empty()) throw ConfigError("event_lengths is empty");
    for (const auto& [lo, hi] : event_lengths) {
      if (lo < 1 || hi < lo) throw ConfigError("invalid event length bucket");
    }
  }
  if (filler_words < 0) throw ConfigError("filler_words must be >= 0");
}

ag::Matrix class_signatures(int n_classes, int dim, Rng& rng) {
  const int rows = n_classes + 1;
  if (rows > dim) throw ConfigError("signatures need dim > n_classes");
  Eigen::MatrixXd basis(rows, dim);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < dim; ++c) basis(r, c) = rng.normal();
    for (int q = 0; q < r; ++q) {
      basis.row(r) -= basis.row(r).dot(basis.row(q)) * basis.row(q);
    }
    basis.row(r).normalize();
  }
  return (basis * std::sqrt(static_cast<double>(dim))).cast<float>();
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Dataset ds;
  ds.task = spec.task;
  ds.raw_dim = spec.feature_dim;
  ds.classes = class_names(spec.task, spec.n_classes);
  const ag::Matrix signatures = class_signatures(spec.n_classes, spec.feature_dim, rng);
  const bool by_fraction = spec.background_fraction > 0.0;

  char id[32];
  for (int v = 0; v < spec.n_videos; ++v) {
    VideoRecord video;
    std::snprintf(id, sizeof id, "video_%05d", v);
    video.id = id;
    const int len = rng.uniform_int(spec.min_frames, spec.max_frames);
    int n_events = rng.uniform_int(spec.min_events, spec.max_events);
    if (spec.task == TaskKind::MomentRetrieval) n_events = std::min(n_events, spec.n_classes);

    std::vector<int> lengths;
    if (by_fraction) {
      const int fg = static_cast<int>(std::lround((1.0 - spec.background_fraction) * len));
      n_events = std::max(1, std::min(n_events, fg / 2));
      if (fg < 1 || len - fg < n_events - 1) {
        throw GenerationError("video " + video.id + ": cannot fit " +
                              std::to_string(n_events) + " events in " +
                              std::to_string(len) + " frames");
      }
      lengths = random_partition(fg, n_events, std::min(2, fg), rng);
    } else {
      bool packed = false;
      for (int attempt = 0; attempt < 100 && !packed; ++attempt) {
        lengths.clear();
        for (int e = 0; e < n_events; ++e) {
          const auto& [lo, hi] = spec.event_lengths[static_cast<std::size_t>(
              rng.uniform_int(0, static_cast<int>(spec.event_lengths.size()) - 1))];
          lengths.push_back(rng.uniform_int(lo, hi));
        }
        packed = std::accumulate(lengths.begin(), lengths.end(), 0) + n_events - 1 <= len;
      }
      if (!packed) {
        throw GenerationError("video " + video.id + ": " + std::to_string(n_events) +
                              " events do not fit in " + std::to_string(len) +
                              " frames after 100 attempts");
      }
    }

    const int used = std::accumulate(lengths.begin(), lengths.end(), 0);
    // n_events + 1 gaps; the inner ones are at least one frame wide.
    std::vector<int> gaps = random_partition(len - used - (n_events - 1), n_events + 1, 0, rng);
    for (int g = 1; g < n_events; ++g) gaps[static_cast<std::size_t>(g)] += 1;

    std::vector<int> labels(static_cast<std::size_t>(n_events));
    if (spec.task == TaskKind::MomentRetrieval) {
      std::vector<int> concepts(static_cast<std::size_t>(spec.n_classes));
      std::iota(concepts.begin(), concepts.end(), 0);
      std::shuffle(concepts.begin(), concepts.end(), rng.engine());
      std::copy_n(concepts.begin(), n_events, labels.begin());
    } else {
      for (auto& l : labels) l = rng.uniform_int(0, spec.n_classes - 1);
    }

    std::vector<int> frame_label(static_cast<std::size_t>(len), -1);
    int cursor = gaps[0];
    for (int e = 0; e < n_events; ++e) {
      const auto ue = static_cast<std::size_t>(e);
      const int start = cursor;
      const int end = cursor + lengths[ue] - 1;
      for (int f = start; f <= end; ++f) frame_label[static_cast<std::size_t>(f)] = labels[ue];
      Segment seg{static_cast<double>(start), static_cast<double>(end), labels[ue], {}};
      if (spec.task == TaskKind::MomentRetrieval) {
        seg.class_id = e;
        video.captions.push_back(
            caption_for(ds.classes[static_cast<std::size_t>(labels[ue])], spec.filler_words, rng));
      }
      video.segments.push_back(seg);
      cursor = end + 1 + gaps[ue + 1];
    }

    video.frames.resize(len, spec.feature_dim);
    for (int f = 0; f < len; ++f) {
      const int row = frame_label[static_cast<std::size_t>(f)] + 1;
      for (int d = 0; d < spec.feature_dim; ++d) {
        const double noise = spec.noise_std > 0.0 ? rng.normal(0.0, spec.noise_std) : 0.0;
        video.frames(f, d) = signatures(row, d) + static_cast<float>(noise);
      }
    }
    ds.videos.push_back(std::move(video));
  }
  return ds;
}

Dataset generate_clips(const SyntheticSpec& spec) {
  SyntheticSpec clip = spec;
  clip.task = TaskKind::ActionLocalization;
  clip.background_fraction = -1.0;
  clip.validate();
  Rng rng(clip.seed);
  Dataset ds;
  ds.task = TaskKind::ActionLocalization;
  ds.raw_dim = clip.feature_dim;
  ds.classes = class_names(ds.task, clip.n_classes);
  const ag::Matrix signatures = class_signatures(clip.n_classes, clip.feature_dim, rng);
  char id[32];
  for (int v = 0; v < clip.n_videos; ++v) {
    VideoRecord video;
    std::snprintf(id, sizeof id, "clip_%05d", v);
    video.id = id;
    const int len = rng.uniform_int(clip.min_frames, clip.max_frames);
    const int label = rng.uniform_int(0, clip.n_classes - 1);
    video.segments.push_back({0.0, static_cast<double>(len - 1), label, {}});
    video.frames.resize(len, clip.feature_dim);
    for (int f = 0; f < len; ++f) {
      for (int d = 0; d < clip.feature_dim; ++d) {
        const double noise = clip.noise_std > 0.0 ? rng.normal(0.0, clip.noise_std) : 0.0;
        video.frames(f, d) = signatures(label + 1, d) + static_cast<float>(noise);
      }
    }
    ds.videos.push_back(std::move(video));
  }
  return ds;
}

int TaskSample::valid_frames() const {
  return static_cast<int>(std::count(frames.mask.begin(), frames.mask.end(), std::uint8_t{1}));
}

Segment TaskSample::to_source(const Segment& s) const {
  Segment out = s;
  out.start = index_offset + s.start * index_step;
  out.end = index_offset + s.end * index_step;
  return out;
}

namespace {

TaskSample window_sample(const VideoRecord& video, const Dataset& dataset, int start,
                         int n) {
  const int len = video.length();
  const int valid = std::max(0, std::min(n, len - start));
  TaskSample out;
  out.video_id = video.id;
  out.task = dataset.task;
  out.fps = video.fps;
  out.source_frames = len;
  out.index_offset = start;
  out.index_step = 1.0;
  out.frames.rows = ag::Matrix::Zero(n, video.frames.cols());
  out.frames.rows.topRows(valid) = video.frames.middleRows(start, valid);
  out.frames.mask.assign(static_cast<std::size_t>(n), 0);
  std::fill_n(out.frames.mask.begin(), valid, std::uint8_t{1});

  if (dataset.task != TaskKind::MomentRetrieval) {
    out.texts = dataset.classes;
    out.query_ids.resize(out.texts.size());
    std::iota(out.query_ids.begin(), out.query_ids.end(), 0);
  }
  for (const auto& seg : video.segments) {
    const double s = seg.start - start;
    const double e = seg.end - start;
    if (e < 0.0 || s > valid - 1) continue;
    Segment clipped{std::max(s, 0.0), std::min(e, static_cast<double>(valid - 1)),
                    seg.class_id, {}};
    if (dataset.task == TaskKind::MomentRetrieval) {
      out.texts.push_back(video.captions.at(static_cast<std::size_t>(seg.class_id)));
      out.query_ids.push_back(seg.class_id);
      clipped.class_id = static_cast<int>(out.texts.size()) - 1;
    }
    out.gts.push_back(clipped);
  }
  return out;
}

}  // namespace

TaskSample sample_frames(const VideoRecord& video, const Dataset& dataset,
                         const SamplingConfig& sampling, Rng& rng) {
  const int n = sampling.n;
  if (n < 1) throw ConfigError("sample count must be >= 1");
  const int len = video.length();
  if (len < 1) throw InputError("video " + video.id + " has no frames");

  if (sampling.mode == SamplingMode::ConsecutivePadded) {
    const int start = len > n ? rng.uniform_int(0, len - n) : 0;
    return window_sample(video, dataset, start, n);
  }

  TaskSample out;
  out.video_id = video.id;
  out.task = dataset.task;
  out.fps = video.fps;
  out.source_frames = len;
  out.index_step = n > 1 ? static_cast<double>(len - 1) / (n - 1) : 1.0;
  out.frames.rows.resize(n, video.frames.cols());
  for (int j = 0; j < n; ++j) {
    const auto src = static_cast<Eigen::Index>(std::lround(j * out.index_step));
    out.frames.rows.row(j) = video.frames.row(std::min<Eigen::Index>(src, len - 1));
  }
  out.frames.mask.assign(static_cast<std::size_t>(n), 1);
  if (dataset.task == TaskKind::MomentRetrieval) {
    out.texts = video.captions;
  } else {
    out.texts = dataset.classes;
  }
  out.query_ids.resize(out.texts.size());
  std::iota(out.query_ids.begin(), out.query_ids.end(), 0);
  for (const auto& seg : video.segments) {
    out.gts.push_back({seg.start / out.index_step, seg.end / out.index_step, seg.class_id, {}});
  }
  return out;
}

std::vector<TaskSample> sliding_windows(const VideoRecord& video, const Dataset& dataset,
                                        int n) {
  if (n < 1) throw ConfigError("window size must be >= 1");
  std::vector<TaskSample> out;
  for (int start = 0; start < video.length(); start += n) {
    out.push_back(window_sample(video, dataset, start, n));
  }
  return out;
}

std::pair<Dataset, Dataset> split_videos(const Dataset& dataset, std::size_t n_first) {
  if (n_first > dataset.videos.size()) {
    throw InputError("cannot take " + std::to_string(n_first) + " of " +
                     std::to_string(dataset.videos.size()) + " videos");
  }
  Dataset first = dataset;
  Dataset second = dataset;
  first.videos.assign(dataset.videos.begin(),
                      dataset.videos.begin() + static_cast<std::ptrdiff_t>(n_first));
  second.videos.assign(dataset.videos.begin() + static_cast<std::ptrdiff_t>(n_first),
                       dataset.videos.end());
  return {std::move(first), std::move(second)};
}

std::pair<Dataset, Dataset> zero_shot_split(const Dataset& dataset, std::uint64_t seed) {
  if (dataset.task == TaskKind::MomentRetrieval) {
    throw InputError("zero-shot splits apply to class-labelled datasets");
  }
  const int n = static_cast<int>(dataset.classes.size());
  if (n < 2) throw InputError("zero-shot split needs at least two classes");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng.engine());

  auto make = [&](int begin, int end) {
    std::vector<int> remap(static_cast<std::size_t>(n), -1);
    Dataset part;
    part.task = dataset.task;
    part.raw_dim = dataset.raw_dim;
    for (int i = begin; i < end; ++i) {
      const int c = order[static_cast<std::size_t>(i)];
      remap[static_cast<std::size_t>(c)] = static_cast<int>(part.classes.size());
      part.classes.push_back(dataset.classes[static_cast<std::size_t>(c)]);
    }
    for (const auto& video : dataset.videos) {
      VideoRecord copy = video;
      copy.segments.clear();
      for (const auto& seg : video.segments) {
        const int m = remap[static_cast<std::size_t>(seg.class_id)];
        if (m < 0) continue;
        Segment s = seg;
        s.class_id = m;
        copy.segments.push_back(s);
      }
      part.videos.push_back(std::move(copy));
    }
    return part;
  };
  return {make(0, n / 2), make(n / 2, n)};
}

}  // namespace unloc
