#pragma once

// Core library. The network front end lives in sonograin/server.hpp (needs Boost).
#include "sonograin/constants.hpp"
#include "sonograin/corpus.hpp"
#include "sonograin/crossfade.hpp"
#include "sonograin/error.hpp"
#include "sonograin/frame.hpp"
#include "sonograin/index.hpp"
#include "sonograin/kdtree.hpp"
#include "sonograin/rng.hpp"
#include "sonograin/service.hpp"
#include "sonograin/synth.hpp"
#include "sonograin/trace.hpp"
#include "sonograin/velocity.hpp"
#include "sonograin/wav.hpp"
