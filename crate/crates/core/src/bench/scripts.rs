//! The sandbox behavior corpus: figure-producing scripts in three styles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::sandbox::ArtifactKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptBehavior {
    /// Calls a display function on a static figure.
    DisplayCall,
    /// Builds a static figure and never saves or shows it.
    ForgottenSave,
    /// Builds an interactive figure, shown, saved or left unreferenced.
    InteractiveFigure,
}

impl ScriptBehavior {
    pub const ALL: [ScriptBehavior; 3] =
        [ScriptBehavior::DisplayCall, ScriptBehavior::ForgottenSave, ScriptBehavior::InteractiveFigure];

    pub fn as_str(self) -> &'static str {
        match self {
            ScriptBehavior::DisplayCall => "display_call",
            ScriptBehavior::ForgottenSave => "forgotten_save",
            ScriptBehavior::InteractiveFigure => "interactive_figure",
        }
    }

    /// Artifact kind a run must yield to count as captured.
    pub fn expected_kind(self) -> ArtifactKind {
        match self {
            ScriptBehavior::InteractiveFigure => ArtifactKind::InteractiveHtml,
            _ => ArtifactKind::RasterImageB64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorScript {
    pub behavior: ScriptBehavior,
    pub index: usize,
    pub code: String,
}

/// `per_row` scripts per behavior. Templates cycle so every variant is
/// exercised; numeric parameters come from the seeded stream.
pub fn behavior_corpus(per_row: usize, seed: u64) -> Vec<BehaviorScript> {
    let mut out = Vec::with_capacity(per_row * 3);
    for (row, behavior) in ScriptBehavior::ALL.into_iter().enumerate() {
        for index in 0..per_row {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((row * 1_000_000 + index) as u64);
            let code = match behavior {
                ScriptBehavior::DisplayCall => display_call(index, &mut rng),
                ScriptBehavior::ForgottenSave => forgotten_save(index, &mut rng),
                ScriptBehavior::InteractiveFigure => interactive(index, &mut rng),
            };
            out.push(BehaviorScript { behavior, index, code });
        }
    }
    out
}

fn params(rng: &mut ChaCha8Rng) -> (u32, u32) {
    (rng.gen_range(10..120), rng.gen_range(1..9))
}

fn display_call(index: usize, rng: &mut ChaCha8Rng) -> String {
    let (n, a) = params(rng);
    match index % 6 {
        0 => format!("import matplotlib.pyplot as plt\nplt.plot([i * {a} for i in range({n})])\nplt.title('linear')\nplt.show()\n"),
        1 => format!("import matplotlib.pyplot as plt\nimport numpy as np\nfig, ax = plt.subplots()\nxs = np.random.default_rng({a}).normal(size={n})\nax.scatter(xs, xs ** 2)\nplt.show()\n"),
        2 => format!("import matplotlib.pyplot as plt\nimport numpy as np\nplt.hist(np.random.default_rng({a}).normal(size={n} * 10), bins=20)\nplt.show()\n"),
        3 => format!("import matplotlib.pyplot as plt\nfig = plt.figure()\nax = fig.add_subplot(111)\nax.bar(['a', 'b', 'c'], [{a}, {n}, {a} + {n}])\nfig.show()\n"),
        4 => format!("import pandas as pd\nimport matplotlib.pyplot as plt\ndf = pd.DataFrame({{'x': range({n}), 'y': [i % {a} for i in range({n})]}})\ndf.plot(x='x', y='y')\nplt.show()\n"),
        _ => format!("import matplotlib.pyplot as plt\nimport numpy as np\nfig, axes = plt.subplots(1, 2)\naxes[0].imshow(np.arange({n} * {n}).reshape({n}, {n}))\naxes[1].plot(range({a}))\nplt.show()\nprint('done')\n"),
    }
}

fn forgotten_save(index: usize, rng: &mut ChaCha8Rng) -> String {
    let (n, a) = params(rng);
    match index % 6 {
        0 => format!("import matplotlib.pyplot as plt\nplt.plot([i * {a} for i in range({n})])\nplt.xlabel('step')\n"),
        1 => format!("import matplotlib.pyplot as plt\nimport numpy as np\nfig, ax = plt.subplots()\nax.plot(np.sin(np.linspace(0, {a}, {n})))\n"),
        2 => format!("import matplotlib.pyplot as plt\n\ndef draw():\n    fig = plt.figure()\n    plt.plot(range({n}), [x % {a} for x in range({n})])\n\ndraw()\n"),
        3 => format!("import matplotlib.pyplot as plt\nfrom matplotlib.figure import Figure\nfig = Figure()\nax = fig.subplots()\nax.plot(range({n}))\nprint('figure built')\n"),
        4 => format!("import pandas as pd\ndf = pd.DataFrame({{'v': [i * {a} % 17 for i in range({n})]}})\nax = df['v'].plot(kind='hist')\n"),
        _ => format!("import matplotlib.pyplot as plt\nfigs = []\nfor k in range(2):\n    f, ax = plt.subplots()\n    ax.plot(range({n} + k * {a}))\n    figs.append(f)\n"),
    }
}

fn interactive(index: usize, rng: &mut ChaCha8Rng) -> String {
    let (n, a) = params(rng);
    match index % 6 {
        0 => format!("import plotly.express as px\nfig = px.scatter(x=list(range({n})), y=[i % {a} for i in range({n})])\nfig.show()\n"),
        1 => format!("import plotly.graph_objects as go\nfig = go.Figure(go.Bar(x=['a', 'b', 'c'], y=[{a}, {n}, {a}]))\nfig.show()\n"),
        2 => format!("import plotly.express as px\nfig = px.line(x=list(range({n})), y=[i * {a} for i in range({n})])\n"),
        3 => format!("import plotly.graph_objects as go\nfig = go.Figure(go.Scatter(y=[i ** 2 % {a} for i in range({n})]))\nfig.write_html('trend.html')\n"),
        4 => format!("import plotly.io as pio\nimport plotly.graph_objects as go\npio.show(go.Figure(go.Histogram(x=[i % {a} for i in range({n})])))\n"),
        _ => format!("from plotly.subplots import make_subplots\nimport plotly.graph_objects as go\nfig = make_subplots(rows=1, cols=2)\nfig.add_trace(go.Scatter(y=list(range({n}))), row=1, col=1)\nfig.add_trace(go.Bar(y=[{a}, {n}]), row=1, col=2)\nfig.show()\n"),
    }
}
