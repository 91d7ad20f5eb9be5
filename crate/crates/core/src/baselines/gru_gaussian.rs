use super::neural::{mean_of, EventEncoder, LocalEvent, Markers, NeuralBaseline, NeuralConfig, SequenceNet};
use crate::error::Result;
use crate::forecaster::{ForecastStep, OpCounter};
use crate::tensor::{GruCell, Linear, ParameterSet, Tape, Var};

/// Smallest forecast inter-event time.
const MIN_DT: f64 = 1e-6;

/// Encoder GRU over the history, decoder GRU over the window, and a Gaussian
/// head on the next inter-event time.
#[derive(Clone, Debug)]
pub struct GruGaussian {
    encoder: EventEncoder,
    decoder: GruCell,
    mean: Linear,
    log_sigma: Linear,
    markers: Markers,
}

pub type GruGaussianModel = NeuralBaseline<GruGaussian>;

impl GruGaussian {
    fn context(&self, tape: &mut Tape<'_, f64>, history: &[LocalEvent]) -> Result<Var> {
        let h0 = self.encoder.zero_state(tape)?;
        Ok(self.encoder.run(tape, h0, history, None)?.0)
    }

    fn mean_dt(&self, tape: &mut Tape<'_, f64>, h: Var) -> Result<Var> {
        let m = self.mean.forward(tape, h)?;
        tape.softplus(m)
    }

    /// Squared error of the mean plus the Gaussian NLL with the mean held fixed.
    fn time_loss(&self, tape: &mut Tape<'_, f64>, h: Var, dt: f64) -> Result<Var> {
        let mu = self.mean_dt(tape, h)?;
        let err = tape.add_scalar(mu, -dt)?;
        let mse = tape.square(err)?;
        let fixed = tape.detach(err)?;
        let sq = tape.square(fixed)?;
        let log_sigma = self.log_sigma.forward(tape, h)?;
        let inv_var = tape.scale(log_sigma, -2.0)?;
        let inv_var = tape.exp(inv_var)?;
        let quad = tape.mul(sq, inv_var)?;
        let quad = tape.scale(quad, 0.5)?;
        let nll = tape.add(log_sigma, quad)?;
        tape.add(mse, nll)
    }
}

impl SequenceNet for GruGaussian {
    fn label(&self) -> String {
        "gru-gaussian".into()
    }

    fn build(params: &mut ParameterSet<f64>, n: usize, cfg: &NeuralConfig) -> Result<Self> {
        let encoder = EventEncoder::new(params, "gru.encoder", n, cfg);
        Ok(Self {
            decoder: GruCell::new(params, "gru.decoder", encoder.input_dim(), cfg.hidden_dim),
            encoder,
            mean: Linear::new(params, "gru.mean", cfg.hidden_dim, 1),
            log_sigma: Linear::new(params, "gru.log_sigma", cfg.hidden_dim, 1),
            markers: Markers::new(params, "gru.marker", n, cfg)?,
        })
    }

    fn window_loss(&self, tape: &mut Tape<'_, f64>, history: &[LocalEvent], horizon: f64, events: &[LocalEvent]) -> Result<(Var, Vec<(f64, f64)>)> {
        let mut h = self.context(tape, history)?;
        let mut last = horizon;
        let mut terms = Vec::with_capacity(events.len());
        let mut probs = Vec::with_capacity(events.len());
        for &(u, v, t) in events {
            let time = self.time_loss(tape, h, t - last)?;
            let (entity, pu, pv) = self.markers.nll(tape, h, u, v, &mut OpCounter::default())?;
            terms.push(tape.add(time, entity)?);
            probs.push((pu, pv));
            h = self.encoder.step_with(&self.decoder, tape, h, u, v, t - last)?;
            last = t;
        }
        Ok((mean_of(tape, &terms)?, probs))
    }

    fn forecast(&self, params: &ParameterSet<f64>, history: &[LocalEvent], horizon: f64, k: usize, ops: &mut OpCounter) -> Result<Vec<ForecastStep>> {
        let mut tape = Tape::new(params);
        let mut h = self.context(&mut tape, history)?;
        let mut now = horizon;
        let mut steps = Vec::with_capacity(k);
        for _ in 0..k {
            let mu = self.mean_dt(&mut tape, h)?;
            let dt = tape.item(mu).max(MIN_DT);
            let (u, v, p_source, p_dest) = self.markers.greedy(&mut tape, h, ops)?;
            now += dt;
            steps.push(ForecastStep { dt, t_abs: now, source: u, dest: v, lambda_total: 1.0 / dt, p_source, p_dest });
            h = self.encoder.step_with(&self.decoder, &mut tape, h, u, v, dt)?;
        }
        Ok(steps)
    }
}
