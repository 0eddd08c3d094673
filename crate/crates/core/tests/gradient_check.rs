mod oracles;

use oracles::gradients;

#[test]
fn conv2d() {
    gradients::conv2d();
}

#[test]
fn fully_connected() {
    gradients::fully_connected();
}

#[test]
fn relu() {
    gradients::relu();
}

#[test]
fn maxpool() {
    gradients::maxpool();
}

#[test]
fn dropout_with_fixed_mask() {
    gradients::dropout_with_fixed_mask();
}

#[test]
fn l1_loss() {
    gradients::l1_loss();
}

#[test]
fn l2_loss() {
    gradients::l2_loss();
}

#[test]
fn berhu_loss() {
    gradients::berhu_loss();
}

#[test]
fn whole_network() {
    gradients::whole_network();
}

#[test]
fn network_loss_end_to_end() {
    gradients::network_loss_end_to_end();
}
