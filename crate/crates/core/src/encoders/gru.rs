use rand::Rng;

use super::init::glorot;
use crate::diffcore::{ParamId, ParamSet, Tape, Tensor, Var};
use crate::error::Result;

/// One GRU direction:
///
/// ```text
/// z = σ(W_z x + U_z h + b_z)
/// r = σ(W_r x + U_r h + b_r)
/// h̃ = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h' = h + z ⊙ (h̃ - h)
/// ```
#[derive(Clone, Debug)]
pub struct GruCell {
    hidden: usize,
    /// `[W_z, W_r, W_h]`, each `[hidden, input]`.
    w: [ParamId; 3],
    /// `[U_z, U_r, U_h]`, each `[hidden, hidden]`.
    u: [ParamId; 3],
    b: [ParamId; 3],
}

const GATES: [&str; 3] = ["z", "r", "h"];

impl GruCell {
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut add = |name: String, t: Tensor| params.add(name, t, true);
        let mut ids = Vec::with_capacity(9);
        for g in GATES {
            ids.push(add(format!("{prefix}.w_{g}"), glorot(rng, &[hidden, input], input, hidden))?);
            ids.push(add(format!("{prefix}.u_{g}"), glorot(rng, &[hidden, hidden], hidden, hidden))?);
            ids.push(add(format!("{prefix}.b_{g}"), Tensor::zeros(&[hidden]))?);
        }
        Ok(Self::from_ids(hidden, &ids))
    }

    pub fn bind(params: &ParamSet, prefix: &str) -> Result<Self> {
        let mut ids = Vec::with_capacity(9);
        for g in GATES {
            for kind in ["w", "u", "b"] {
                ids.push(params.id(&format!("{prefix}.{kind}_{g}"))?);
            }
        }
        let hidden = params.tensor(ids[2]).len();
        Ok(Self::from_ids(hidden, &ids))
    }

    fn from_ids(hidden: usize, ids: &[ParamId]) -> Self {
        GruCell {
            hidden,
            w: [ids[0], ids[3], ids[6]],
            u: [ids[1], ids[4], ids[7]],
            b: [ids[2], ids[5], ids[8]],
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Input projections `X W_gᵀ + b_g` for every step at once (`[steps, hidden]` each).
    fn project_inputs(&self, tape: &mut Tape, xs: Var) -> Result<[Var; 3]> {
        let mut out = [xs; 3];
        for g in 0..3 {
            let w = tape.param(self.w[g]);
            let b = tape.param(self.b[g]);
            let p = tape.matmul_t(xs, w)?;
            out[g] = tape.add_bias(p, b)?;
        }
        Ok(out)
    }

    /// One recurrence step from projected inputs `xp` and state `h`.
    fn step(&self, tape: &mut Tape, xp: [Var; 3], h: Var) -> Result<Var> {
        let uz = tape.param(self.u[0]);
        let ur = tape.param(self.u[1]);
        let uh = tape.param(self.u[2]);
        let a = tape.matmul(uz, h)?;
        let a = tape.add(xp[0], a)?;
        let z = tape.sigmoid(a)?;
        let a = tape.matmul(ur, h)?;
        let a = tape.add(xp[1], a)?;
        let r = tape.sigmoid(a)?;
        let rh = tape.mul(r, h)?;
        let a = tape.matmul(uh, rh)?;
        let a = tape.add(xp[2], a)?;
        let cand = tape.tanh(a)?;
        let diff = tape.sub(cand, h)?;
        let upd = tape.mul(z, diff)?;
        tape.add(h, upd)
    }

    /// Runs over the rows of `xs` (`[steps, input]`) from a zero state, in
    /// reverse order when `reverse` is set. `dropout` applies to the state
    /// entering each recurrent product. Returns states in input order.
    pub fn run(&self, tape: &mut Tape, xs: Var, reverse: bool, dropout: f64) -> Result<Vec<Var>> {
        let steps = tape.value(xs).rows();
        let proj = self.project_inputs(tape, xs)?;
        let mut h = tape.constant(Tensor::zeros(&[self.hidden]));
        let mut out = vec![h; steps];
        let order: Vec<usize> = if reverse {
            (0..steps).rev().collect()
        } else {
            (0..steps).collect()
        };
        for t in order {
            let xp = [
                tape.row(proj[0], t)?,
                tape.row(proj[1], t)?,
                tape.row(proj[2], t)?,
            ];
            let hd = tape.dropout(h, dropout)?;
            h = self.step(tape, xp, hd)?;
            out[t] = h;
        }
        Ok(out)
    }
}

/// Forward and backward GRUs whose states are concatenated per position.
#[derive(Clone, Debug)]
pub struct BiGru {
    pub forward: GruCell,
    pub backward: GruCell,
}

impl BiGru {
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(BiGru {
            forward: GruCell::new(params, &format!("{prefix}.fwd"), input, hidden, rng)?,
            backward: GruCell::new(params, &format!("{prefix}.bwd"), input, hidden, rng)?,
        })
    }

    pub fn bind(params: &ParamSet, prefix: &str) -> Result<Self> {
        Ok(BiGru {
            forward: GruCell::bind(params, &format!("{prefix}.fwd"))?,
            backward: GruCell::bind(params, &format!("{prefix}.bwd"))?,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.forward.hidden() + self.backward.hidden()
    }

    /// Context-dependent vectors for the rows of `xs`: `[steps, 2 * hidden]`.
    pub fn contextualize(&self, tape: &mut Tape, xs: Var, dropout: f64) -> Result<Var> {
        let f = self.forward.run(tape, xs, false, dropout)?;
        let b = self.backward.run(tape, xs, true, dropout)?;
        let rows = f
            .into_iter()
            .zip(b)
            .map(|(f, b)| tape.concat(&[f, b]))
            .collect::<Result<Vec<_>>>()?;
        tape.stack(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{sigmoid, Mode};
    use crate::encoders::uniform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(input: usize, hidden: usize, seed: u64) -> (ParamSet, BiGru) {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gru = BiGru::new(&mut ps, "gru", input, hidden, &mut rng).unwrap();
        // Non-zero biases so the oracle exercises every term.
        for (_, p) in ps.iter_mut() {
            if p.name.contains(".b_") {
                p.tensor = uniform(&mut rng, p.tensor.shape(), 0.5);
            }
        }
        (ps, gru)
    }

    fn scalar(ps: &ParamSet, name: &str) -> f64 {
        ps.by_name(name).unwrap().tensor.data()[0]
    }

    fn scalar_gru(ps: &ParamSet, dir: &str, xs: &[f64]) -> Vec<f64> {
        let p = |n: &str| scalar(ps, &format!("gru.{dir}.{n}"));
        let mut h = 0.0;
        xs.iter()
            .map(|&x| {
                let z = sigmoid(p("w_z") * x + p("u_z") * h + p("b_z"));
                let r = sigmoid(p("w_r") * x + p("u_r") * h + p("b_r"));
                let cand = (p("w_h") * x + p("u_h") * r * h + p("b_h")).tanh();
                h = (1.0 - z) * h + z * cand;
                h
            })
            .collect()
    }

    fn run(ps: &ParamSet, gru: &BiGru, xs: &[f64], width: usize) -> Tensor {
        let mut tape = Tape::inference(ps);
        let x = tape.constant(Tensor::matrix(xs.len() / width, width, xs.to_vec()).unwrap());
        let out = gru.contextualize(&mut tape, x, 0.5).unwrap();
        tape.value(out).clone()
    }

    #[test]
    fn matches_scalar_oracle() {
        let (ps, gru) = setup(1, 1, 5);
        let xs = [0.3, -1.2, 0.8];
        let out = run(&ps, &gru, &xs, 1);
        let fwd = scalar_gru(&ps, "fwd", &xs);
        let mut bwd = scalar_gru(&ps, "bwd", &[0.8, -1.2, 0.3]);
        bwd.reverse();
        for t in 0..3 {
            assert!((out.row(t)[0] - fwd[t]).abs() < 1e-15);
            assert!((out.row(t)[1] - bwd[t]).abs() < 1e-15);
        }
    }

    #[test]
    fn single_step_uses_zero_state() {
        let (ps, gru) = setup(1, 1, 6);
        let out = run(&ps, &gru, &[0.7], 1);
        assert_eq!(out.shape(), &[1, 2]);
        assert_eq!(out.row(0)[0], scalar_gru(&ps, "fwd", &[0.7])[0]);
        assert_eq!(out.row(0)[1], scalar_gru(&ps, "bwd", &[0.7])[0]);
    }

    #[test]
    fn reversal_mirrors_directions_when_cells_match() {
        let (mut ps, gru) = setup(2, 3, 7);
        // Give both directions the same weights.
        let names: Vec<String> = ps.iter().map(|(_, p)| p.name.clone()).collect();
        for n in names.iter().filter(|n| n.contains(".fwd.")) {
            let t = ps.by_name(n).unwrap().tensor.clone();
            let id = ps.id(&n.replace(".fwd.", ".bwd.")).unwrap();
            ps.get_mut(id).tensor = t;
        }
        let xs = [0.1, 0.4, -0.3, 0.9, 1.1, -0.5, 0.2, 0.0];
        let rev: Vec<f64> = xs.chunks(2).rev().flatten().copied().collect();
        let a = run(&ps, &gru, &xs, 2);
        let b = run(&ps, &gru, &rev, 2);
        for t in 0..4 {
            assert_eq!(&a.row(t)[..3], &b.row(3 - t)[3..]);
            assert_eq!(&a.row(t)[3..], &b.row(3 - t)[..3]);
        }
    }

    #[test]
    fn order_matters() {
        let (ps, gru) = setup(2, 3, 8);
        let xs = [0.1, 0.4, -0.3, 0.9, 1.1, -0.5];
        let swapped = [-0.3, 0.9, 0.1, 0.4, 1.1, -0.5];
        let a = run(&ps, &gru, &xs, 2);
        let b = run(&ps, &gru, &swapped, 2);
        assert_ne!(a.row(2), b.row(2));
    }

    #[test]
    fn train_mode_dropout_changes_states_eval_does_not() {
        let (ps, gru) = setup(2, 4, 9);
        let x = Tensor::matrix(3, 2, vec![0.5; 6]).unwrap();
        let eval = run(&ps, &gru, x.data(), 2);
        let mut tape = Tape::new(&ps, Mode::Train, 1);
        let xv = tape.constant(x);
        let out = gru.contextualize(&mut tape, xv, 0.5).unwrap();
        assert_ne!(tape.value(out), &eval);
    }
}
