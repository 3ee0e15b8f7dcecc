use super::{log_softmax, softmax, Gradients, HeadGrad, HeadKind, Network, NnError, Result};
use crate::envs::Transition;

/// Mean negative log-likelihood of `labels` under the classifier, with a
/// fresh dropout mask per sample (train mode).
pub fn nll_loss_and_grad(net: &mut Network, batch: &[(&[f64], usize)]) -> Result<(f64, Gradients)> {
    if net.spec().head_kind != HeadKind::SoftmaxClassifier {
        return Err(NnError::WrongHead(HeadKind::SoftmaxClassifier));
    }
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let classes = net.spec().output_dim;
    if let Some(&(_, label)) = batch.iter().find(|(_, l)| *l >= classes) {
        return Err(NnError::LabelOutOfRange { label, classes });
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = Gradients::zeros(net.parameter_count());
    let mut loss = 0.0;
    for &(input, label) in batch {
        let mask = net.sample_mask();
        let trace = net.trace(input, Some(&mask))?;
        let logp = log_softmax(&trace.head_raw);
        loss -= logp[label] * scale;
        let mut dz = softmax(&trace.head_raw);
        dz[label] -= 1.0;
        dz.iter_mut().for_each(|g| *g *= scale);
        net.backward(&trace, HeadGrad::Logits(&dz), &mut grads.0);
    }
    Ok((loss, grads))
}

/// Double-Q targets: the online net picks the bootstrap action at `s'`, the
/// target net scores it. Terminal transitions do not bootstrap; truncated
/// ones do.
pub fn td_targets(net: &Network, target_net: &Network, batch: &[&Transition], gamma: f64) -> Result<Vec<f64>> {
    batch
        .iter()
        .map(|tr| {
            if tr.terminal {
                return Ok(tr.reward);
            }
            let next_action = net.greedy_action(&tr.next_state)?;
            let next_q = target_net.predict(&tr.next_state)?;
            Ok(tr.reward + gamma * next_q[next_action])
        })
        .collect()
}

/// Mean squared TD error `(y - Q(s, a))^2` and its gradient with respect to
/// the online network. The target network receives no gradient.
pub fn td_loss_and_grad(
    net: &mut Network,
    target_net: &Network,
    batch: &[&Transition],
    gamma: f64,
) -> Result<(f64, Gradients)> {
    if net.spec().head_kind != HeadKind::QDueling {
        return Err(NnError::WrongHead(HeadKind::QDueling));
    }
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let actions = net.spec().output_dim;
    if let Some(tr) = batch.iter().find(|tr| tr.action >= actions) {
        return Err(NnError::LabelOutOfRange {
            label: tr.action,
            classes: actions,
        });
    }
    let targets = td_targets(net, target_net, batch, gamma)?;
    let scale = 1.0 / batch.len() as f64;
    let mut grads = Gradients::zeros(net.parameter_count());
    let mut loss = 0.0;
    for (tr, y) in batch.iter().zip(targets) {
        let mask = net.sample_mask();
        let trace = net.trace(&tr.state, Some(&mask))?;
        let q = net.head_output(&trace.head_raw);
        let err = q[tr.action] - y;
        loss += err * err * scale;
        let mut dq = vec![0.0; actions];
        dq[tr.action] = 2.0 * err * scale;
        net.backward(&trace, HeadGrad::Q(&dq), &mut grads.0);
    }
    Ok((loss, grads))
}
