use super::expected_wait;
use super::neural::{EventEncoder, LocalEvent, MarkerHead, Markers, NeuralBaseline, NeuralConfig, SequenceNet};
use crate::error::Result;
use crate::forecaster::{ForecastStep, OpCounter};
use crate::model::PROB_FLOOR;
use crate::tensor::{Init, Linear, ParamId, ParameterSet, Tape, Var};

/// Recurrent marked point process with intensity `exp(a(h) + w s)`, `s`
/// the time since the last event and `w = softplus(w_raw) > 0`.
#[derive(Clone, Debug)]
pub struct Rmtpp {
    encoder: EventEncoder,
    past: Linear,
    w_raw: ParamId,
    markers: Markers,
    marker: MarkerHead,
}

pub type RmtppModel = NeuralBaseline<Rmtpp>;

impl Rmtpp {
    fn terms(&self, tape: &mut Tape<'_, f64>, h: Var) -> Result<(Var, Var)> {
        let a = self.past.forward(tape, h)?;
        let raw = tape.param(self.w_raw);
        Ok((a, tape.softplus(raw)?))
    }

    /// `-ln lambda(s) + Lambda(s) - Lambda(s0)`: likelihood of the next event
    /// at elapsed `s` given none up to `s0`.
    fn time_nll(tape: &mut Tape<'_, f64>, a: Var, w: Var, s0: f64, s: f64) -> Result<Var> {
        let ws = tape.scale(w, s)?;
        let ws0 = tape.scale(w, s0)?;
        let log_rate = tape.add(a, ws)?;
        let ln_w = tape.log(w, PROB_FLOOR)?;
        let c = tape.sub(a, ln_w)?;
        let hi = tape.add(c, ws)?;
        let hi = tape.exp(hi)?;
        let lo = tape.add(c, ws0)?;
        let lo = tape.exp(lo)?;
        let mass = tape.sub(hi, lo)?;
        tape.sub(mass, log_rate)
    }
}

/// Mean wait when the cumulative hazard is `c (e^{w x} - 1)`.
fn mean_wait(c: f64, w: f64) -> Result<f64> {
    let cumulative = |x: f64| c * (w * x).exp_m1();
    let knee = (60.0 / c).ln_1p() / w;
    let rate = c * w * (w * knee).exp();
    expected_wait(cumulative, knee, rate, cumulative(knee) - rate * knee)
}

impl SequenceNet for Rmtpp {
    fn label(&self) -> String {
        match self.marker {
            MarkerHead::Flat => "rmtpp".into(),
            MarkerHead::Hierarchical => "rmtpp-hrchy".into(),
        }
    }

    fn build(params: &mut ParameterSet<f64>, n: usize, cfg: &NeuralConfig) -> Result<Self> {
        Ok(Self {
            encoder: EventEncoder::new(params, "rmtpp.encoder", n, cfg),
            past: Linear::new(params, "rmtpp.past", cfg.hidden_dim, 1),
            w_raw: params.add("rmtpp.w_raw", 1, 1, Init::Constant { value: -2.0 }),
            markers: Markers::new(params, "rmtpp.marker", n, cfg)?,
            marker: cfg.marker,
        })
    }

    fn window_loss(&self, tape: &mut Tape<'_, f64>, history: &[LocalEvent], horizon: f64, events: &[LocalEvent]) -> Result<(Var, Vec<(f64, f64)>)> {
        let h0 = self.encoder.zero_state(tape)?;
        let (mut h, last) = self.encoder.run(tape, h0, history, None)?;
        let mut last = last.unwrap_or(horizon);
        let mut s0 = horizon - last;
        let mut terms = Vec::with_capacity(events.len());
        let mut probs = Vec::with_capacity(events.len());
        for &(u, v, t) in events {
            let (a, w) = self.terms(tape, h)?;
            let time = Self::time_nll(tape, a, w, s0, t - last)?;
            let (entity, pu, pv) = self.markers.nll(tape, h, u, v, &mut OpCounter::default())?;
            terms.push(tape.add(time, entity)?);
            probs.push((pu, pv));
            h = self.encoder.step(tape, h, u, v, t - last)?;
            last = t;
            s0 = 0.0;
        }
        Ok((super::neural::mean_of(tape, &terms)?, probs))
    }

    fn forecast(&self, params: &ParameterSet<f64>, history: &[LocalEvent], horizon: f64, k: usize, ops: &mut OpCounter) -> Result<Vec<ForecastStep>> {
        let mut tape = Tape::new(params);
        let h0 = self.encoder.zero_state(&mut tape)?;
        let (mut h, last) = self.encoder.run(&mut tape, h0, history, None)?;
        let mut last = last.unwrap_or(horizon);
        let mut now = horizon;
        let mut steps = Vec::with_capacity(k);
        for _ in 0..k {
            let (a, w) = self.terms(&mut tape, h)?;
            let (a, w) = (tape.item(a), tape.item(w));
            let s0 = now - last;
            let dt = mean_wait((a + w * s0).exp() / w, w)?;
            let (u, v, p_source, p_dest) = self.markers.greedy(&mut tape, h, ops)?;
            let t = now + dt;
            steps.push(ForecastStep { dt, t_abs: t, source: u, dest: v, lambda_total: (a + w * (t - last)).exp(), p_source, p_dest });
            h = self.encoder.step(&mut tape, h, u, v, t - last)?;
            last = t;
            now = t;
        }
        Ok(steps)
    }
}
