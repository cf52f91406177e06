#pragma once
#include <gsid/errors.hpp>
#include <gsid/dictionary.hpp>
#include <gsid/core_model.hpp>
#include <gsid/dynamics.hpp>
#include <gsid/series_io.hpp>
#include <gsid/differentiation.hpp>
#include <gsid/solver.hpp>
#include <gsid/diagnostics.hpp>
#include <gsid/identification.hpp>
#include <gsid/experiments.hpp>
#include <gsid/report_io.hpp>
#include <gsid/config_io.hpp>
