#ifndef STOCKCAST_H
#define STOCKCAST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define SC_CRITERION_AIC 0

#define SC_CRITERION_BIC 1

#define SC_LOSS_MSE 0

#define SC_LOSS_DIRECTIONAL 1

typedef enum ScStatus {
  SC_STATUS_OK = 0,
  SC_STATUS_NULL_POINTER = 1,
  SC_STATUS_INVALID_UTF8 = 2,
  SC_STATUS_INVALID_ARGUMENT = 3,
  SC_STATUS_IO = 4,
  SC_STATUS_PARSE = 5,
  SC_STATUS_NUMERIC = 6,
  SC_STATUS_BUFFER_TOO_SMALL = 7,
  SC_STATUS_PANIC = 8,
} ScStatus;

// Fitted ARIMA model.
typedef struct ScArimaModel ScArimaModel;

// Trained LSTM forecaster.
typedef struct ScLstmModel ScLstmModel;

// Loaded price series.
typedef struct ScSeries ScSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failure on this thread, or null after a success.
// The pointer stays valid until the next call into this library on the
// same thread.
const char *sc_last_error_message(void);

// Frees a string returned by this library.
//
// # Safety
// `s` must come from this library and not have been freed.
void sc_string_free(char *s);

// Loads an OHLC CSV file or canonical JSON series.
//
// # Safety
// `path` and `symbol` must be NUL-terminated strings; `out` must be writable.
enum ScStatus sc_series_load(const char *path, const char *symbol, struct ScSeries **out);

// Number of bars, or 0 for a null handle.
//
// # Safety
// `series` must be null or a live handle.
uintptr_t sc_series_len(const struct ScSeries *series);

// Copies the mid-price sequence into `buf`.
//
// # Safety
// `series` must be a live handle and `buf` must hold `len` doubles.
enum ScStatus sc_series_mids(const struct ScSeries *series, double *buf, uintptr_t len);

// # Safety
// `series` must be null or a handle not yet freed.
void sc_series_free(struct ScSeries *series);

// Exhaustive order search over `p <= max_p`, `d <= max_d`, `q <= max_q`.
//
// # Safety
// `data` must hold `len` doubles; `out` must be writable.
enum ScStatus sc_auto_arima(const double *data,
                            uintptr_t len,
                            uintptr_t max_p,
                            uintptr_t max_d,
                            uintptr_t max_q,
                            int criterion_code,
                            struct ScArimaModel **out);

// Writes the selected order. Any of the outputs may be null.
//
// # Safety
// `model` must be a live handle.
enum ScStatus sc_arima_order(const struct ScArimaModel *model,
                             uintptr_t *p,
                             uintptr_t *d,
                             uintptr_t *q);

// Forecasts `horizon` steps after `history`, written to `out`.
//
// # Safety
// `history` must hold `len` doubles and `out` `horizon` doubles.
enum ScStatus sc_arima_forecast(const struct ScArimaModel *model,
                                const double *history,
                                uintptr_t len,
                                uintptr_t horizon,
                                double *out);

// Serializes the model; free the result with [`sc_string_free`].
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum ScStatus sc_arima_to_json(const struct ScArimaModel *model, char **out);

// # Safety
// `model` must be null or a handle not yet freed.
void sc_arima_free(struct ScArimaModel *model);

// Loads a model document written by `stockcast fit`.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum ScStatus sc_lstm_from_json(const char *json, struct ScLstmModel **out);

// Raw values [`sc_lstm_predict`] needs, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
uintptr_t sc_lstm_history_len(const struct ScLstmModel *model);

// Forecast width, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
uintptr_t sc_lstm_horizon(const struct ScLstmModel *model);

// Predicts from exactly `sc_lstm_history_len` raw prices.
//
// # Safety
// `recent` must hold `len` doubles and `out` `out_len` doubles.
enum ScStatus sc_lstm_predict(const struct ScLstmModel *model,
                              const double *recent,
                              uintptr_t len,
                              double *out,
                              uintptr_t out_len);

// # Safety
// `model` must be null or a handle not yet freed.
void sc_lstm_free(struct ScLstmModel *model);

// One rebalancing decision over `n` assets. `shares` is read as the current
// holding and overwritten with the new one; `cash` likewise. The objective
// value goes to `expected_return` when it is not null.
//
// # Safety
// `prices`, `predicted` and `shares` must hold `n` doubles; `cash` must be valid.
enum ScStatus sc_optimize_portfolio(uintptr_t n,
                                    const double *prices,
                                    const double *predicted,
                                    double *shares,
                                    double *cash,
                                    double *expected_return);

// Equal-weight buy-and-hold over a `days x n` price matrix.
//
// # Safety
// `prices` must hold `days * n` doubles and `out` `days` doubles.
enum ScStatus sc_hold_strategy(double initial_wealth,
                               const double *prices,
                               uintptr_t days,
                               uintptr_t n,
                               double *out);

// Backtests `days` rebalances. `forecasts` is `days x n`, `actuals` is
// `(days + 1) x n`, and `net_worth` receives `days + 1` values.
//
// # Safety
// All arrays must have the sizes above.
enum ScStatus sc_run_backtest(const double *forecasts,
                              const double *actuals,
                              uintptr_t days,
                              uintptr_t n,
                              double initial_wealth,
                              double *net_worth);

// Loss of one `horizon`-step prediction against its target.
//
// # Safety
// `pred` and `target` must hold `horizon` doubles; `out` must be writable.
enum ScStatus sc_compute_loss(const double *pred,
                              const double *target,
                              uintptr_t horizon,
                              double anchor,
                              int kind,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STOCKCAST_H */
