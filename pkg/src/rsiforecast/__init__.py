"""Electricity price forecasting with Residual Supply Index features.

Market records (CSV or a seeded pay-as-bid simulator), hourly RSI, lagged
load/price/RSI features, a Levenberg-Marquardt trained perceptron and the
with/without-RSI ablation.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    CorrelationError,
    DataError,
    GapError,
    InsufficientDataError,
    RsiForecastError,
    ShortageError,
    TrainingError,
)
from .evaluation import (  # noqa: E402
    AblationConfig,
    AblationReport,
    improvement_pct,
    mse,
    pearson,
    rmse,
    run_ablation,
    sensitivity_report,
    sign_test,
)
from .features import (  # noqa: E402
    DayPattern,
    FeatureSpec,
    apply_scaling,
    build_dataset,
    day_pattern,
    fit_scaling,
    invert_target,
)
from .market_data import (  # noqa: E402
    GeneratorSpec,
    HourlyRecord,
    MarketDataset,
    SimConfig,
    clear_pay_as_bid,
    load_csv,
    synthesize,
    write_csv,
)
from .mlp import MlpModel, TrainConfig, forward, jacobian, select_hidden_size, train_lm  # noqa: E402
from .rsi import compute_rsi_series, condition_report, market_rsi, rsi_per_generator  # noqa: E402
