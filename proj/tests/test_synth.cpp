#include <gtest/gtest.h>

#include <map>

#include "support.hpp"

using namespace sgtest;

namespace {

// Corpus with the given retained fragment ids over a clip of `windows` fragments.
Corpus corpus_over(std::shared_ptr<const AudioClip> clip, std::vector<std::size_t> ids) {
  Corpus c;
  c.mean_ratio = 1e-5;
  c.audio = std::move(clip);
  for (std::size_t id : ids) c.fragments.push_back({id, {100.0, 0.0}, 0.1, 1e-5});
  return c;
}

const Fixture& shared_noise() {
  static const Fixture f = noise_fixture(2000, 21);
  return f;
}

}  // namespace

TEST(BuildGrain, InteriorAndClampedWindows) {
  auto clip = std::make_shared<const AudioClip>(AudioClip::silent(2, 6000 * kHop));
  const Corpus c = corpus_over(clip, {0, 500, 5999});
  const Grain mid = build_grain(c, 500, 28);
  EXPECT_EQ(mid.start, 486u * 480u);
  EXPECT_EQ(mid.length, 13920u);
  EXPECT_EQ(mid.center_fragment, 500u);
  const Grain head = build_grain(c, 0, 28);
  EXPECT_EQ(head.start, 0u);
  EXPECT_EQ(head.length, 7200u);
  const Grain tail = build_grain(c, 5999, 28);
  EXPECT_EQ(tail.start, 5985u * 480u);
  EXPECT_EQ(tail.length, 15u * 480u);
  const Grain bare = build_grain(c, 500, 0);
  EXPECT_EQ(bare.start, 500u * 480u);
  EXPECT_EQ(bare.length, 480u);
  EXPECT_THROW(build_grain(c, 6000, 28), std::out_of_range);
}

TEST(SynthParams, Validation) {
  EXPECT_NO_THROW(SynthParams{}.validate());
  EXPECT_THROW((SynthParams{0, 28, 5, 480, 1.0}.validate()), InputError);
  EXPECT_THROW((SynthParams{25, 27, 5, 480, 1.0}.validate()), InputError);
  EXPECT_THROW((SynthParams{25, 28, 0, 480, 1.0}.validate()), InputError);
  EXPECT_THROW((SynthParams{25, 28, 5, 0, 1.0}.validate()), InputError);
  EXPECT_THROW((SynthParams{25, 28, 5, 481, 1.0}.validate()), InputError);
}

TEST(SelectGrain, SingleFragmentCorpusAlwaysSelectsIt) {
  auto clip = std::make_shared<const AudioClip>(band_limited_noise(100 * kHop, 2));
  auto material = Material::make(corpus_over(clip, {42}));
  Synthesizer synth(material, {}, 9);
  for (int i = 0; i < 50; ++i) {
    const Grain g = synth.select_grain({50.0 + i, -3.0});
    EXPECT_EQ(g.center_fragment, 42u);
    EXPECT_EQ(g, build_grain(material->corpus, 42, 28));
    EXPECT_EQ(synth.state().freeze_remaining, 5u);
  }
}

TEST(SelectGrain, SeededSequencesRepeat) {
  const auto& f = shared_noise();
  Synthesizer a(f.material, {}, 1234), b(f.material, {}, 1234), c(f.material, {}, 1235);
  std::vector<std::size_t> sa, sb, sc;
  for (int i = 0; i < 200; ++i) {
    const Vec2 v{120.0, 40.0 + i % 7};
    sa.push_back(a.select_grain(v).center_fragment);
    sb.push_back(b.select_grain(v).center_fragment);
    sc.push_back(c.select_grain(v).center_fragment);
  }
  EXPECT_EQ(sa, sb);
  EXPECT_NE(sa, sc);
}

TEST(SelectGrain, DrawsUniformlyFromTheNeighbourSet) {
  const auto& f = shared_noise();
  const Vec2 query{150.0, 20.0};
  const auto neighbours = f.material->index.knn(query, 25);
  ASSERT_EQ(neighbours.size(), 25u);
  std::map<std::size_t, int> counts;
  for (const auto& n : neighbours) counts[n.id] = 0;

  Synthesizer synth(f.material, {}, 2024);
  constexpr int kDraws = 100000;
  for (int i = 0; i < kDraws; ++i) {
    auto it = counts.find(synth.select_grain(query).center_fragment);
    ASSERT_NE(it, counts.end());
    ++it->second;
  }
  const double p = 1.0 / 25.0, mean = kDraws * p, sigma = std::sqrt(kDraws * p * (1 - p));
  double chi2 = 0.0;
  for (const auto& [id, n] : counts) {
    EXPECT_NEAR(n, mean, 3.0 * sigma) << "fragment " << id;
    chi2 += (n - mean) * (n - mean) / mean;
  }
  // chi-square, 24 degrees of freedom, 0.999 quantile
  EXPECT_LT(chi2, 51.18);
}

TEST(Crossfade, EnvelopeIsEqualPower) {
  for (std::size_t len : {1u, 7u, 480u}) {
    const FadeEnvelope env(len);
    for (std::size_t t = 0; t < len; ++t) ASSERT_NEAR(env.out[t] * env.out[t] + env.in[t] * env.in[t], 1.0, 1e-9);
    EXPECT_EQ(env.out[0], 1.0);
    EXPECT_EQ(env.in[0], 0.0);
  }
}

TEST(Crossfade, GrainWithItselfIsReproduced) {
  const auto& f = shared_noise();
  const FadeEnvelope env(480);
  const Grain g = build_grain(f.corpus, 700, 28);
  for (std::size_t cursor : {0u, 960u, 4800u}) {
    std::array<std::span<const float>, 2> seg;
    for (std::size_t c = 0; c < 2; ++c) seg[c] = f.corpus.clip().channel(c).subspan(g.start + cursor, kHop);
    const double r = fade_correlation(seg, seg);
    EXPECT_NEAR(r, 1.0, 1e-12);
    for (std::size_t c = 0; c < 2; ++c) {
      std::array<float, kHop> out;
      crossfade_channel(seg[c], seg[c], env, r, out);
      for (std::size_t t = 0; t < kHop; ++t) ASSERT_NEAR(out[t], seg[c][t], 1e-6);
    }
  }
}

TEST(Crossfade, DecorrelatedInputsUsePlainEqualPower) {
  const FadeEnvelope env(480);
  std::array<float, kHop> a, b, out;
  a.fill(0.5f);
  b.fill(-0.25f);
  crossfade_channel(a, b, env, 0.0, out);
  for (std::size_t t = 0; t < kHop; ++t)
    ASSERT_NEAR(out[t], env.out[t] * 0.5 - env.in[t] * 0.25, 1e-7);
  EXPECT_EQ(fade_correlation(std::array<std::span<const float>, 1>{a}, std::array<std::span<const float>, 1>{b}), 0.0);
}

TEST(ProcessHop, SilenceRampsToExactZeros) {
  const auto& f = shared_noise();
  Synthesizer synth(f.material, {}, 3);
  for (int i = 0; i < 3; ++i) synth.process_hop({80.0, 0.0});
  const HopBlock ramp = synth.process_hop({0.0, 0.0});
  EXPECT_TRUE(synth.state().silent);
  EXPECT_NE(ramp[0][0], 0.0f);
  for (const auto& ch : ramp)
    for (std::size_t t = 480; t < kHop; ++t) EXPECT_EQ(ch[t], 0.0f);
  for (int i = 0; i < 20; ++i) {
    const HopBlock z = synth.process_hop({0.0, 0.0});
    for (const auto& ch : z)
      for (float s : ch) ASSERT_EQ(s, 0.0f);
  }
}

TEST(ProcessHop, ShortFadeSilencesWithinFadeLength) {
  const auto& f = shared_noise();
  SynthParams p;
  p.fade_len = 64;
  Synthesizer synth(f.material, p, 3);
  synth.process_hop({80.0, 0.0});
  const HopBlock ramp = synth.process_hop({0.5, 0.0});  // below v_silence
  for (const auto& ch : ramp)
    for (std::size_t t = 64; t < kHop; ++t) ASSERT_EQ(ch[t], 0.0f);
}

TEST(ProcessHop, FadeInFromSilenceStartsAtZero) {
  const auto& f = shared_noise();
  Synthesizer synth(f.material, {}, 5);
  const HopBlock first = synth.process_hop({90.0, 10.0});
  EXPECT_TRUE(synth.last_hop_selected());
  EXPECT_EQ(first[0][0], 0.0f);
  EXPECT_EQ(first[1][0], 0.0f);
  EXPECT_FALSE(synth.state().silent);
}

TEST(ProcessHop, FreezeHoldsForExactlyFreezeHops) {
  const auto& f = shared_noise();
  for (std::size_t freeze : {1u, 5u, 9u}) {
    SynthParams p;
    p.freeze_hops = freeze;
    Synthesizer synth(f.material, p, 77);
    std::vector<std::size_t> selections;
    for (std::size_t hop = 0; hop < 600; ++hop) {
      synth.process_hop({110.0, -35.0});
      EXPECT_LE(synth.state().freeze_remaining, freeze);
      if (synth.last_hop_selected()) selections.push_back(hop);
    }
    ASSERT_GT(selections.size(), 2u);
    for (std::size_t i = 1; i < selections.size(); ++i) EXPECT_EQ(selections[i] - selections[i - 1], freeze + 1);
  }
}

TEST(ProcessHop, ExhaustedGrainIsReplacedEarly) {
  const auto& f = shared_noise();
  SynthParams p;
  p.n = 2;  // 3-fragment grains run out after two hops
  Synthesizer synth(f.material, p, 8);
  std::vector<std::size_t> selections;
  for (std::size_t hop = 0; hop < 100; ++hop) {
    synth.process_hop({110.0, -35.0});
    EXPECT_LE(synth.state().cursor, synth.state().active->length);
    if (synth.last_hop_selected()) selections.push_back(hop);
  }
  for (std::size_t i = 1; i < selections.size(); ++i) EXPECT_EQ(selections[i] - selections[i - 1], 2u);
}

TEST(ProcessHop, DegenerateGrainOfOneFragment) {
  const auto& f = shared_noise();
  SynthParams p;
  p.n = 0;
  Synthesizer synth(f.material, p, 8);
  for (int hop = 0; hop < 50; ++hop) {
    synth.process_hop({60.0, 60.0});
    EXPECT_TRUE(synth.last_hop_selected());
    EXPECT_EQ(synth.state().active->length, kHop);
  }
}

TEST(RenderOffline, LengthAndDeterminism) {
  const auto& f = shared_noise();
  const VelocityTrace trace = sweep_trace(700, 250.0, 300, 0.3);
  const AudioClip a = render_offline(f.material, trace, 99);
  const AudioClip b = render_offline(f.material, trace, 99);
  ASSERT_EQ(a.channel_count(), 2u);
  EXPECT_EQ(a.frames(), 700u * 480u);
  EXPECT_EQ(encode_wav(a, SampleFormat::Pcm24), encode_wav(b, SampleFormat::Pcm24));
  for (unsigned threads : {2u, 3u, 8u})
    EXPECT_EQ(render_offline(f.material, trace, 99, {}, threads).channels, a.channels) << threads;
  EXPECT_NE(render_offline(f.material, trace, 100).channels, a.channels);
}

TEST(RenderOffline, ZeroVelocityRendersSilence) {
  const auto& f = shared_noise();
  const AudioClip out = render_offline(f.material, VelocityTrace{100, std::vector<Vec2>(200)}, 1);
  for (const auto& ch : out.channels)
    for (float s : ch) ASSERT_EQ(s, 0.0f);
  EXPECT_THROW(render_offline(f.material, VelocityTrace{}, 1), InputError);
}

TEST(RenderOffline, GaplessOnBandLimitedNoise) {
  const auto& f = shared_noise();
  float source_step = 0.0f;
  for (const auto& ch : f.corpus.clip().channels)
    for (std::size_t i = 1; i < ch.size(); ++i) source_step = std::max(source_step, std::abs(ch[i] - ch[i - 1]));

  // Include stops and restarts so silence ramps and fade-ins are exercised.
  VelocityTrace trace = sweep_trace(3000, 280.0, 450, 0.0);
  for (std::size_t i = 1000; i < 1040; ++i) trace.samples[i] = {};
  const AudioClip out = render_offline(f.material, trace, 5);
  for (const auto& ch : out.channels)
    for (std::size_t i = 1; i < ch.size(); ++i)
      ASSERT_LE(std::abs(ch[i] - ch[i - 1]), 2.0f * source_step) << "sample " << i;
}

TEST(RenderOffline, NeverExceedsSourcePeak) {
  const auto& f = shared_noise();
  const AudioClip out = render_offline(f.material, sweep_trace(2000, 300.0, 333, 0.2), 6);
  const double limit = f.material->peak * (1.0 + 1e-6);
  for (const auto& ch : out.channels)
    for (float s : ch) ASSERT_LE(std::abs(s), limit);
}

TEST(RenderOffline, LoudnessFollowsSquaredSpeed) {
  const double c = 0.25 / (300.0 * 300.0);
  const VelocityTrace source = sweep_trace(6000, 300.0, 2000);
  static const Fixture f = make_fixture(loudness_matched_clip(source, c, 31), source);

  Synthesizer synth(f.material, {}, 17);
  std::vector<double> rms, speed2;
  for (std::size_t i = 0; i < 3000; ++i) {
    const double s = 300.0 * static_cast<double>(i) / 2999.0;
    const Vec2 v{s * 0.6, s * 0.8};
    rms.push_back(block_rms(synth.process_hop(v)));
    speed2.push_back(v.squared_norm());
  }
  EXPECT_GT(spearman(rms, speed2), 0.9);
}
