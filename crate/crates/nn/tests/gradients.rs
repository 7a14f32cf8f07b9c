use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrmec_nn::gradcheck::{check_input, check_params};
use vrmec_nn::loss::mse;
use vrmec_nn::{Activation, Lstm, Matrix, Mlp, Params};

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

#[test]
fn dense_stack_gradients() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (hidden, out) in [
            (Activation::Tanh, Activation::Linear),
            (Activation::Sigmoid, Activation::Softmax),
            (Activation::Relu, Activation::Sigmoid),
        ] {
            let mut net = Mlp::new(&[6, 12, 10, 4], hidden, out, &mut rng);
            assert!(net.parameter_count() <= 1000);
            let x = random_matrix(5, 6, &mut rng);
            let target = random_matrix(5, 4, &mut rng);
            let (y, tape) = net.forward(&x, None).unwrap();
            let (_, dy) = mse(&y, &target).unwrap();
            let (dx, grads) = net.backward(&tape, &dy).unwrap();
            let report = check_params(&mut net, &grads, STEP, |n| mse(&n.predict(&x).unwrap(), &target).unwrap().0);
            assert!(report.passes(TOL), "seed {seed} {hidden:?}: {report:?}");
            let report = check_input(&x, &dx, STEP, |xx| mse(&net.predict(xx).unwrap(), &target).unwrap().0);
            assert!(report.passes(TOL), "input seed {seed}: {report:?}");
        }
    }
}

#[test]
fn dropout_gradients_with_fixed_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut net = Mlp::new(&[4, 16, 3], Activation::Tanh, Activation::Linear, &mut rng).with_dropout(0.35);
    let x = random_matrix(3, 4, &mut rng);
    let target = random_matrix(3, 3, &mut rng);
    let mut mask_rng = ChaCha8Rng::seed_from_u64(5);
    let (y, tape) = net.forward(&x, Some(&mut mask_rng)).unwrap();
    let (_, dy) = mse(&y, &target).unwrap();
    let (_, grads) = net.backward(&tape, &dy).unwrap();
    let report = check_params(&mut net, &grads, STEP, |n| {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let (y, _) = n.forward(&x, Some(&mut r)).unwrap();
        mse(&y, &target).unwrap().0
    });
    assert!(report.passes(TOL), "{report:?}");
}

/// Two stacked LSTM layers followed by a softmax head on the last hidden state.
struct Stack {
    l1: Lstm,
    l2: Lstm,
    head: Mlp,
}

impl Params for Stack {
    fn tensors(&self) -> Vec<&Matrix> {
        let mut v = self.l1.tensors();
        v.extend(self.l2.tensors());
        v.extend(self.head.tensors());
        v
    }
    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = self.l1.tensors_mut();
        v.extend(self.l2.tensors_mut());
        v.extend(self.head.tensors_mut());
        v
    }
}

impl Stack {
    fn predict(&self, xs: &[Matrix]) -> Matrix {
        let h1 = self.l1.predict(xs).unwrap();
        let h2 = self.l2.predict(&h1).unwrap();
        self.head.predict(h2.last().unwrap()).unwrap()
    }
}

#[test]
fn lstm_stack_gradients() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut net = Stack {
            l1: Lstm::new(3, 5, &mut rng),
            l2: Lstm::new(5, 4, &mut rng),
            head: Mlp::new(&[4, 6], Activation::Linear, Activation::Softmax, &mut rng),
        };
        assert!(net.parameter_count() <= 1000);
        let xs: Vec<Matrix> = (0..4).map(|_| random_matrix(2, 3, &mut rng)).collect();
        let target = random_matrix(2, 6, &mut rng).mapv(f64::abs);

        let (h1, t1) = net.l1.forward(&xs).unwrap();
        let (h2, t2) = net.l2.forward(&h1).unwrap();
        let (y, th) = net.head.forward(h2.last().unwrap(), None).unwrap();
        let (_, dy) = mse(&y, &target).unwrap();
        let (dlast, mut grads_head) = net.head.backward(&th, &dy).unwrap();
        let mut dh2 = vec![Array2::zeros(dlast.dim()); h2.len()];
        *dh2.last_mut().unwrap() = dlast;
        let (dh1, mut grads) = net.l2.backward(&t2, &dh2).unwrap();
        let (dxs, g1) = net.l1.backward(&t1, &dh1).unwrap();
        let mut all = g1;
        all.append(&mut grads);
        all.append(&mut grads_head);

        let report = check_params(&mut net, &all, STEP, |n| mse(&n.predict(&xs), &target).unwrap().0);
        assert!(report.passes(TOL), "seed {seed}: {report:?}");

        for t in 0..xs.len() {
            let report = check_input(&xs[t], &dxs[t], STEP, |x| {
                let mut seq = xs.clone();
                seq[t] = x.clone();
                mse(&net.predict(&seq), &target).unwrap().0
            });
            assert!(report.passes(TOL), "input {t} seed {seed}: {report:?}");
        }
    }
}

#[test]
fn corrupted_gradient_is_caught() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net = Mlp::new(&[3, 5, 2], Activation::Tanh, Activation::Linear, &mut rng);
    let x = random_matrix(4, 3, &mut rng);
    let target = random_matrix(4, 2, &mut rng);
    let (y, tape) = net.forward(&x, None).unwrap();
    let (_, dy) = mse(&y, &target).unwrap();
    let (_, mut grads) = net.backward(&tape, &dy).unwrap();
    grads[0].mapv_inplace(|g| -g);
    let report = check_params(&mut net, &grads, STEP, |n| mse(&n.predict(&x).unwrap(), &target).unwrap().0);
    assert!(!report.passes(TOL));
}

#[test]
fn constant_loss_has_zero_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = Mlp::new(&[3, 5, 2], Activation::Tanh, Activation::Linear, &mut rng);
    let x = random_matrix(4, 3, &mut rng);
    let (y, tape) = net.forward(&x, None).unwrap();
    let (_, grads) = net.backward(&tape, &Array2::zeros(y.dim())).unwrap();
    assert!(grads.iter().all(|g| g.iter().all(|&v| v == 0.0)));
}
